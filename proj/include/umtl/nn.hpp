#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "umtl/autodiff.hpp"
#include "umtl/bundle.hpp"
#include "umtl/digest.hpp"
#include "umtl/error.hpp"
#include "umtl/rng.hpp"
#include "umtl/tensor.hpp"

namespace umtl::nn {

// Ordered, named parameter tensors. Order is the checkpoint and gradient
// accumulation order, so it must be construction-deterministic.
class ParamStore {
public:
    int add(const std::string& name, Tensor init) {
        check(index_.find(name) == index_.end(), errc::state, "duplicate parameter: " + name);
        names_.push_back(name);
        values_.push_back(std::move(init));
        index_[name] = static_cast<int>(names_.size()) - 1;
        return static_cast<int>(names_.size()) - 1;
    }

    int find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? -1 : it->second;
    }

    int find_or_throw(const std::string& name) const {
        int i = find(name);
        check(i >= 0, errc::state, "unknown parameter: " + name);
        return i;
    }

    size_t size() const { return names_.size(); }
    const std::string& name(int i) const { return names_[static_cast<size_t>(i)]; }
    Tensor& value(int i) { return values_[static_cast<size_t>(i)]; }
    const Tensor& value(int i) const { return values_[static_cast<size_t>(i)]; }
    Tensor& value(const std::string& name) { return values_[static_cast<size_t>(find_or_throw(name))]; }
    const Tensor& value(const std::string& name) const {
        return values_[static_cast<size_t>(find_or_throw(name))];
    }

    int64_t total_scalars() const {
        int64_t n = 0;
        for (const auto& t : values_) n += t.numel();
        return n;
    }

    void write_arrays(Bundle& b, const std::string& prefix) const {
        for (size_t i = 0; i < names_.size(); ++i)
            b.f64.emplace_back(prefix + names_[i], values_[i]);
    }

    void read_arrays(const Bundle& b, const std::string& prefix) {
        for (size_t i = 0; i < names_.size(); ++i) {
            const Tensor* t = b.find_f64(prefix + names_[i]);
            check(t != nullptr, errc::io, "checkpoint missing parameter: " + prefix + names_[i]);
            check(t->shape == values_[i].shape, errc::shape,
                  "checkpoint shape mismatch for " + names_[i]);
            values_[i] = *t;
        }
    }

    std::string digest() const {
        Sha256 h;
        for (size_t i = 0; i < names_.size(); ++i) {
            h.update(names_[i]);
            h.update(values_[i].v.data(), values_[i].v.size() * sizeof(double));
        }
        return h.hex();
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::unordered_map<std::string, int> index_;
};

// One autodiff leaf per parameter, aligned with store order.
struct Bound {
    ad::Graph* g = nullptr;
    const ParamStore* store = nullptr;
    std::vector<ad::NodeId> ids;

    ad::NodeId operator[](int pidx) const { return ids[static_cast<size_t>(pidx)]; }
    ad::NodeId id(const std::string& name) const {
        return ids[static_cast<size_t>(store->find_or_throw(name))];
    }
};

inline Bound bind(ad::Graph& g, const ParamStore& store) {
    Bound b;
    b.g = &g;
    b.store = &store;
    b.ids.reserve(store.size());
    for (size_t i = 0; i < store.size(); ++i)
        b.ids.push_back(g.leaf(store.value(static_cast<int>(i))));
    return b;
}

// Per-store gradient accumulator; chunk accumulators are reduced in chunk
// order to keep reductions deterministic.
struct GradBuffer {
    std::vector<Tensor> g;

    explicit GradBuffer(const ParamStore& store) {
        g.reserve(store.size());
        for (size_t i = 0; i < store.size(); ++i)
            g.push_back(Tensor::zeros(store.value(static_cast<int>(i)).shape));
    }

    void accumulate_from(const ad::Graph& graph, const Bound& bound, double weight = 1.0) {
        for (size_t i = 0; i < g.size(); ++i) {
            Tensor gi = graph.grad_of(bound.ids[i]);
            for (int64_t j = 0; j < gi.numel(); ++j) g[i].v[j] += weight * gi.v[j];
        }
    }

    void add(const GradBuffer& other) {
        for (size_t i = 0; i < g.size(); ++i)
            for (int64_t j = 0; j < g[i].numel(); ++j) g[i].v[j] += other.g[i].v[j];
    }

    void zero() {
        for (auto& t : g)
            for (double& x : t.v) x = 0.0;
    }
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;
    std::vector<Tensor> m, v;

    explicit Adam(const ParamStore& store, double lr_) : lr(lr_) {
        m.reserve(store.size());
        v.reserve(store.size());
        for (size_t i = 0; i < store.size(); ++i) {
            m.push_back(Tensor::zeros(store.value(static_cast<int>(i)).shape));
            v.push_back(Tensor::zeros(store.value(static_cast<int>(i)).shape));
        }
    }

    void step(ParamStore& store, const GradBuffer& grads) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < m.size(); ++i) {
            Tensor& p = store.value(static_cast<int>(i));
            const Tensor& gr = grads.g[i];
            for (int64_t j = 0; j < p.numel(); ++j) {
                const double gj = gr.v[j];
                m[i].v[j] = beta1 * m[i].v[j] + (1.0 - beta1) * gj;
                v[i].v[j] = beta2 * v[i].v[j] + (1.0 - beta2) * gj * gj;
                const double mhat = m[i].v[j] / bc1;
                const double vhat = v[i].v[j] / bc2;
                p.v[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

// ---- initializers ----

// fan-in scaled uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in))
inline Tensor init_fanin(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), rng, -s, s);
}

// ---- layer builders ----

struct LinearNames {
    std::string w, b;
};

inline LinearNames add_linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
                              Rng& rng) {
    ps.add(prefix + ".w", init_fanin({in, out}, in, rng));
    ps.add(prefix + ".b", Tensor::zeros({out}));
    return {prefix + ".w", prefix + ".b"};
}

inline ad::NodeId linear(const Bound& p, const std::string& prefix, ad::NodeId x) {
    return p.g->affine(x, p.id(prefix + ".w"), p.id(prefix + ".b"));
}

inline void add_layernorm(ParamStore& ps, const std::string& prefix, int64_t d) {
    ps.add(prefix + ".g", Tensor::full({d}, 1.0));
    ps.add(prefix + ".b", Tensor::zeros({d}));
}

inline ad::NodeId layernorm(const Bound& p, const std::string& prefix, ad::NodeId x) {
    return p.g->layernorm(x, p.id(prefix + ".g"), p.id(prefix + ".b"));
}

inline void add_msa(ParamStore& ps, const std::string& prefix, int64_t d, Rng& rng) {
    add_linear(ps, prefix + ".q", d, d, rng);
    add_linear(ps, prefix + ".k", d, d, rng);
    add_linear(ps, prefix + ".v", d, d, rng);
    add_linear(ps, prefix + ".o", d, d, rng);
}

// Multi-head scaled dot-product attention; q/k/v are already the attention
// inputs (any residuals or embedding offsets happen at the call site).
inline ad::NodeId msa(const Bound& p, const std::string& prefix, ad::NodeId q_in, ad::NodeId k_in,
                      ad::NodeId v_in, int64_t heads) {
    ad::Graph& g = *p.g;
    const int64_t d = g.val(q_in).dim(1);
    check(d % heads == 0, errc::config, "model dim not divisible by heads");
    const int64_t dh = d / heads;
    ad::NodeId q = linear(p, prefix + ".q", q_in);
    ad::NodeId k = linear(p, prefix + ".k", k_in);
    ad::NodeId v = linear(p, prefix + ".v", v_in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ad::NodeId> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int64_t h = 0; h < heads; ++h) {
        ad::NodeId qh = g.slice_cols(q, h * dh, (h + 1) * dh);
        ad::NodeId kh = g.slice_cols(k, h * dh, (h + 1) * dh);
        ad::NodeId vh = g.slice_cols(v, h * dh, (h + 1) * dh);
        ad::NodeId att = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), scale));
        outs.push_back(g.matmul(att, vh));
    }
    return linear(p, prefix + ".o", g.concat_cols(outs));
}

// Two-layer perceptron with a fixed 2x hidden expansion.
inline void add_mlp(ParamStore& ps, const std::string& prefix, int64_t d, Rng& rng) {
    add_linear(ps, prefix + ".fc1", d, 2 * d, rng);
    add_linear(ps, prefix + ".fc2", 2 * d, d, rng);
}

inline ad::NodeId mlp(const Bound& p, const std::string& prefix, ad::NodeId x) {
    return linear(p, prefix + ".fc2", p.g->relu(linear(p, prefix + ".fc1", x)));
}

// Pre-LN encoder block:
//   h = MSA(LN(x)) + x;  out = MLP(LN(h)) + h
inline void add_encoder_block(ParamStore& ps, const std::string& prefix, int64_t d, Rng& rng) {
    add_layernorm(ps, prefix + ".ln1", d);
    add_msa(ps, prefix + ".attn", d, rng);
    add_layernorm(ps, prefix + ".ln2", d);
    add_mlp(ps, prefix + ".mlp", d, rng);
}

inline ad::NodeId encoder_block(const Bound& p, const std::string& prefix, ad::NodeId x,
                                int64_t heads) {
    ad::Graph& g = *p.g;
    ad::NodeId n1 = layernorm(p, prefix + ".ln1", x);
    ad::NodeId h = g.add(msa(p, prefix + ".attn", n1, n1, n1, heads), x);
    ad::NodeId n2 = layernorm(p, prefix + ".ln2", h);
    return g.add(mlp(p, prefix + ".mlp", n2), h);
}

}  // namespace umtl::nn

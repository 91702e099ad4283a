#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "umtl/autodiff.hpp"
#include "umtl/nn.hpp"
#include "umtl/rng.hpp"

using namespace umtl;
using ad::Graph;
using ad::NodeId;

namespace {

// Central finite differences against the analytic gradient for a scalar
// function of several tensor inputs.
void check_grads(std::vector<Tensor> inputs,
                 const std::function<NodeId(Graph&, const std::vector<NodeId>&)>& build,
                 double rel_tol = 1e-6) {
    auto eval = [&](const std::vector<Tensor>& ins) {
        Graph g;
        std::vector<NodeId> ids;
        for (const auto& t : ins) ids.push_back(g.leaf(t));
        return g.val(build(g, ids)).v[0];
    };

    Graph g;
    std::vector<NodeId> ids;
    for (const auto& t : inputs) ids.push_back(g.leaf(t));
    NodeId loss = build(g, ids);
    g.backward(loss);

    for (size_t which = 0; which < inputs.size(); ++which) {
        Tensor analytic = g.grad_of(ids[which]);
        for (int64_t j = 0; j < inputs[which].numel(); ++j) {
            std::vector<Tensor> pert = inputs;
            const double x = inputs[which].v[j];
            const double h = 1e-6 * std::max(1.0, std::abs(x));
            pert[which].v[j] = x + h;
            const double fp = eval(pert);
            pert[which].v[j] = x - h;
            const double fm = eval(pert);
            const double fd = (fp - fm) / (2.0 * h);
            const double a = analytic.v[j];
            if (std::abs(a - fd) < 1e-7) continue;  // below FD noise floor
            const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
            INFO("input " << which << " elem " << j << " analytic " << a << " fd " << fd);
            REQUIRE(std::abs(a - fd) / denom < rel_tol);
        }
    }
}

Tensor randn(std::vector<int64_t> shape, uint64_t seed) {
    Rng rng(seed);
    return Tensor::randn(std::move(shape), rng);
}

}  // namespace

TEST_CASE("add/sub/scale/sum gradients") {
    check_grads({randn({2, 3}, 1), randn({2, 3}, 2)}, [](Graph& g, const std::vector<NodeId>& in) {
        return g.sum_all(g.scale(g.sub(g.add(in[0], in[1]), in[1]), 1.7));
    });
}

TEST_CASE("relu gradient away from the kink") {
    Tensor x = randn({3, 4}, 3);
    for (double& v : x.v)
        if (std::abs(v) < 0.05) v += 0.1;  // keep clear of 0
    check_grads({x}, [](Graph& g, const std::vector<NodeId>& in) {
        return g.sum_all(g.relu(in[0]));
    });
}

TEST_CASE("affine gradient") {
    check_grads({randn({3, 4}, 4), randn({4, 5}, 5), randn({5}, 6)},
                [](Graph& g, const std::vector<NodeId>& in) {
                    return g.sum_all(g.affine(in[0], in[1], in[2]));
                });
}

TEST_CASE("matmul and matmul_nt gradients") {
    check_grads({randn({2, 3}, 7), randn({3, 4}, 8)},
                [](Graph& g, const std::vector<NodeId>& in) {
                    return g.sum_all(g.matmul(in[0], in[1]));
                });
    check_grads({randn({2, 3}, 9), randn({4, 3}, 10)},
                [](Graph& g, const std::vector<NodeId>& in) {
                    return g.sum_all(g.matmul_nt(in[0], in[1]));
                });
}

TEST_CASE("softmax_rows gradient") {
    // weighted sum so the gradient is not identically zero
    Tensor w = randn({2, 5}, 11);
    check_grads({randn({2, 5}, 12)}, [&w](Graph& g, const std::vector<NodeId>& in) {
        NodeId wl = g.leaf(w);
        NodeId prod = g.matmul_nt(g.softmax_rows(in[0]), wl);  // [2,2]
        return g.sum_all(prod);
    });
}

TEST_CASE("layernorm gradient") {
    Tensor w = randn({3, 6}, 13);
    check_grads({randn({3, 6}, 14), randn({6}, 15), randn({6}, 16)},
                [&w](Graph& g, const std::vector<NodeId>& in) {
                    NodeId y = g.layernorm(in[0], in[1], in[2]);
                    return g.sum_all(g.matmul_nt(y, g.leaf(w)));
                },
                1e-5);
}

TEST_CASE("conv2d gradient") {
    check_grads({randn({2, 5, 5}, 17), randn({3, 2, 3, 3}, 18), randn({3}, 19)},
                [](Graph& g, const std::vector<NodeId>& in) {
                    return g.sum_all(g.conv2d(in[0], in[1], in[2]));
                });
}

TEST_CASE("conv2d zero weights produce zero output") {
    Graph g;
    NodeId x = g.leaf(randn({3, 4, 4}, 20));
    NodeId w = g.leaf(Tensor::zeros({2, 3, 3, 3}));
    NodeId b = g.leaf(Tensor::zeros({2}));
    NodeId y = g.conv2d(x, w, b);
    for (double v : g.val(y).v) REQUIRE(v == 0.0);
}

TEST_CASE("windows partitions and round-trips the map") {
    Graph g;
    Tensor fmap = randn({2, 4, 4}, 21);
    NodeId x = g.leaf(fmap);
    NodeId t = g.windows(x, 2);
    const Tensor& tokens = g.val(t);
    REQUIRE(tokens.shape == std::vector<int64_t>{4, 8});
    // every element appears exactly once: reassemble and compare
    Tensor re({2, 4, 4});
    const int64_t per_axis = 2, a = 2, c = 2;
    for (int64_t wy = 0; wy < per_axis; ++wy)
        for (int64_t wx = 0; wx < per_axis; ++wx)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t dy = 0; dy < a; ++dy)
                    for (int64_t dx = 0; dx < a; ++dx)
                        re.at(ch, wy * a + dy, wx * a + dx) =
                            tokens.at(wy * per_axis + wx, (ch * a + dy) * a + dx);
    REQUIRE(re.v == fmap.v);

    check_grads({fmap}, [](Graph& g2, const std::vector<NodeId>& in) {
        return g2.sum_all(g2.windows(in[0], 2));
    });
}

TEST_CASE("slice/concat/mean_rows gradients") {
    check_grads({randn({3, 6}, 22)}, [](Graph& g, const std::vector<NodeId>& in) {
        NodeId left = g.slice_cols(in[0], 0, 2);
        NodeId right = g.slice_cols(in[0], 2, 6);
        NodeId cat = g.concat_cols({right, left});
        return g.sum_all(g.mean_rows(cat));
    });
}

TEST_CASE("l1 gradient flows to both operands") {
    Tensor a = randn({2, 3}, 23);
    Tensor b = randn({2, 3}, 24);
    // keep differences away from the kink
    for (int64_t i = 0; i < a.numel(); ++i)
        if (std::abs(a.v[i] - b.v[i]) < 0.05) a.v[i] += 0.1;
    check_grads({a, b}, [](Graph& g, const std::vector<NodeId>& in) {
        return g.l1(in[0], in[1]);
    });
}

TEST_CASE("l1 of identical tensors is zero") {
    Graph g;
    Tensor a = randn({4}, 25);
    NodeId loss = g.l1(g.leaf(a), g.leaf(a));
    REQUIRE(g.val(loss).v[0] == 0.0);
}

TEST_CASE("bce_logit matches closed forms and gradient") {
    {
        Graph g;
        NodeId logit = g.leaf(Tensor::zeros({1}));
        NodeId loss = g.bce_logit(logit, 1.0);
        REQUIRE_THAT(g.val(loss).v[0], Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
    }
    Tensor l({1});
    l.v[0] = 0.73;
    check_grads({l}, [](Graph& g, const std::vector<NodeId>& in) {
        return g.bce_logit(in[0], 1.0);
    });
    check_grads({l}, [](Graph& g, const std::vector<NodeId>& in) {
        return g.bce_logit(in[0], 0.0);
    });
}

TEST_CASE("softmax_ce gradient") {
    check_grads({randn({1, 4}, 26)}, [](Graph& g, const std::vector<NodeId>& in) {
        return g.softmax_ce(in[0], 2);
    });
}

TEST_CASE("msa block is permutation-equivariant and differentiable") {
    Rng rng(27);
    nn::ParamStore ps;
    nn::add_msa(ps, "attn", 8, rng);

    Tensor x = randn({4, 8}, 28);
    Graph g;
    nn::Bound b = nn::bind(g, ps);
    NodeId y = nn::msa(b, "attn", g.leaf(x), g.leaf(x), g.leaf(x), 2);
    Tensor out = g.val(y);

    // permute input rows; outputs must permute identically
    std::vector<int64_t> perm{2, 0, 3, 1};
    Tensor xp({4, 8});
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 8; ++j) xp.at(i, j) = x.at(perm[static_cast<size_t>(i)], j);
    Graph g2;
    nn::Bound b2 = nn::bind(g2, ps);
    NodeId y2 = nn::msa(b2, "attn", g2.leaf(xp), g2.leaf(xp), g2.leaf(xp), 2);
    const Tensor& out2 = g2.val(y2);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 8; ++j)
            REQUIRE_THAT(out2.at(i, j),
                         Catch::Matchers::WithinAbs(out.at(perm[static_cast<size_t>(i)], j), 1e-12));

    // gradient through the full block w.r.t. all attention weights
    Tensor probe = randn({4, 8}, 29);
    std::vector<Tensor> inputs;
    for (size_t i = 0; i < ps.size(); ++i) inputs.push_back(ps.value(static_cast<int>(i)));
    inputs.push_back(x);
    check_grads(inputs, [&](Graph& gg, const std::vector<NodeId>& in) {
        nn::Bound bb;
        bb.g = &gg;
        bb.store = &ps;
        bb.ids.assign(in.begin(), in.end() - 1);
        NodeId xx = in.back();
        NodeId yy = nn::msa(bb, "attn", xx, xx, xx, 2);
        return gg.sum_all(gg.matmul_nt(yy, gg.leaf(probe)));
    }, 1e-5);
}

TEST_CASE("adam is deterministic and decreases a quadratic") {
    auto run = [] {
        nn::ParamStore ps;
        Rng rng(30);
        ps.add("x", Tensor::randn({8}, rng));
        nn::Adam opt(ps, 0.05);
        std::vector<double> history;
        for (int it = 0; it < 50; ++it) {
            nn::GradBuffer gb(ps);
            double loss = 0.0;
            Tensor& x = ps.value("x");
            for (int64_t j = 0; j < 8; ++j) {
                loss += x.v[j] * x.v[j];
                gb.g[0].v[j] = 2.0 * x.v[j];
            }
            history.push_back(loss);
            opt.step(ps, gb);
        }
        return std::make_pair(history, ps.digest());
    };
    auto [h1, d1] = run();
    auto [h2, d2] = run();
    REQUIRE(d1 == d2);
    REQUIRE(h1 == h2);
    REQUIRE(h1.back() < 0.05 * h1.front());
}

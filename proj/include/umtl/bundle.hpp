#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "umtl/error.hpp"
#include "umtl/tensor.hpp"

namespace umtl {

// On-disk container for named numeric arrays: a plain-text header describing
// metadata and array layout, then the raw little-endian payloads in header
// order. Used for bag files and checkpoints; round-trips are bit-exact.
//
//   umtl-bundle 1
//   meta <key> <value ...>
//   array <name> <f64|i64> <ndim> <d0> <d1> ...
//   data
//   <payload>
struct Bundle {
    std::vector<std::pair<std::string, std::string>> meta;  // ordered
    std::vector<std::pair<std::string, Tensor>> f64;        // ordered
    std::vector<std::pair<std::string, std::vector<int64_t>>> i64;

    void set_meta(const std::string& key, const std::string& value) {
        meta.emplace_back(key, value);
    }

    const std::string* find_meta(const std::string& key) const {
        for (const auto& [k, v] : meta)
            if (k == key) return &v;
        return nullptr;
    }

    std::string meta_or_throw(const std::string& key) const {
        const std::string* v = find_meta(key);
        check(v != nullptr, errc::io, "bundle missing meta key: " + key);
        return *v;
    }

    const Tensor* find_f64(const std::string& name) const {
        for (const auto& [k, t] : f64)
            if (k == name) return &t;
        return nullptr;
    }

    const std::vector<int64_t>* find_i64(const std::string& name) const {
        for (const auto& [k, t] : i64)
            if (k == name) return &t;
        return nullptr;
    }
};

namespace detail {
static_assert(sizeof(double) == 8 && sizeof(int64_t) == 8);

inline bool host_little_endian() {
    const uint16_t probe = 1;
    return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}
}  // namespace detail

inline void save_bundle(const std::string& path, const Bundle& b) {
    check(detail::host_little_endian(), errc::state, "bundle format requires little-endian host");
    std::ostringstream header;
    header << "umtl-bundle 1\n";
    for (const auto& [k, v] : b.meta) {
        check(k.find_first_of(" \n") == std::string::npos, errc::io, "meta key has spaces: " + k);
        check(v.find('\n') == std::string::npos, errc::io, "meta value has newline: " + k);
        header << "meta " << k << " " << v << "\n";
    }
    for (const auto& [name, t] : b.f64) {
        header << "array " << name << " f64 " << t.ndim();
        for (int64_t d : t.shape) header << " " << d;
        header << "\n";
    }
    for (const auto& [name, vec] : b.i64)
        header << "array " << name << " i64 1 " << vec.size() << "\n";
    header << "data\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), errc::io, "cannot open for writing: " + path);
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, t] : b.f64)
        out.write(reinterpret_cast<const char*>(t.v.data()),
                  static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    for (const auto& [name, vec] : b.i64)
        out.write(reinterpret_cast<const char*>(vec.data()),
                  static_cast<std::streamsize>(vec.size() * sizeof(int64_t)));
    out.flush();
    check(out.good(), errc::io, "write failed: " + path);
}

inline Bundle load_bundle(const std::string& path) {
    check(detail::host_little_endian(), errc::state, "bundle format requires little-endian host");
    std::ifstream in(path, std::ios::binary);
    check(in.good(), errc::io, "cannot open bundle: " + path);

    Bundle b;
    struct ArrayDesc {
        std::string name;
        std::string dtype;
        std::vector<int64_t> shape;
    };
    std::vector<ArrayDesc> descs;

    std::string line;
    check(static_cast<bool>(std::getline(in, line)) && line == "umtl-bundle 1", errc::io,
          "not a umtl bundle: " + path);
    for (;;) {
        check(static_cast<bool>(std::getline(in, line)), errc::io,
              "truncated bundle header: " + path);
        if (line == "data") break;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            b.meta.emplace_back(key, value);
        } else if (kind == "array") {
            ArrayDesc d;
            int ndim = 0;
            ls >> d.name >> d.dtype >> ndim;
            check(!ls.fail() && ndim >= 1 && ndim <= 8, errc::io, "bad array header: " + line);
            d.shape.resize(static_cast<size_t>(ndim));
            for (auto& dim : d.shape) {
                ls >> dim;
                check(!ls.fail() && dim >= 0, errc::io, "bad array dims: " + line);
            }
            descs.push_back(std::move(d));
        } else {
            throw Error(errc::io, "unknown bundle header line: " + line);
        }
    }
    for (const auto& d : descs) {
        const int64_t n = Tensor::numel_of(d.shape);
        if (d.dtype == "f64") {
            Tensor t(d.shape);
            in.read(reinterpret_cast<char*>(t.v.data()),
                    static_cast<std::streamsize>(n * sizeof(double)));
            check(in.gcount() == static_cast<std::streamsize>(n * sizeof(double)), errc::io,
                  "truncated array payload: " + d.name);
            b.f64.emplace_back(d.name, std::move(t));
        } else if (d.dtype == "i64") {
            std::vector<int64_t> vec(static_cast<size_t>(n));
            in.read(reinterpret_cast<char*>(vec.data()),
                    static_cast<std::streamsize>(n * sizeof(int64_t)));
            check(in.gcount() == static_cast<std::streamsize>(n * sizeof(int64_t)), errc::io,
                  "truncated array payload: " + d.name);
            b.i64.emplace_back(d.name, std::move(vec));
        } else {
            throw Error(errc::io, "unknown dtype '" + d.dtype + "' in " + path);
        }
    }
    return b;
}

}  // namespace umtl

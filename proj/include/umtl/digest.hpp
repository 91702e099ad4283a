#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "umtl/error.hpp"

namespace umtl {

namespace detail {
struct EvpCtxDeleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
inline std::string to_hex(const unsigned char* bytes, unsigned len) {
    static const char* digits = "0123456789abcdef";
    std::string out(static_cast<size_t>(len) * 2, '0');
    for (unsigned i = 0; i < len; ++i) {
        out[2 * i] = digits[bytes[i] >> 4];
        out[2 * i + 1] = digits[bytes[i] & 0xf];
    }
    return out;
}
}  // namespace detail

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        check(ctx_ != nullptr, errc::state, "EVP_MD_CTX_new failed");
        check(EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) == 1, errc::state,
              "sha256 init failed");
    }

    void update(const void* data, size_t len) {
        check(EVP_DigestUpdate(ctx_.get(), data, len) == 1, errc::state, "sha256 update failed");
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned len = 0;
        check(EVP_DigestFinal_ex(ctx_.get(), md, &len) == 1, errc::state, "sha256 final failed");
        return detail::to_hex(md, len);
    }

private:
    std::unique_ptr<EVP_MD_CTX, detail::EvpCtxDeleter> ctx_;
};

inline std::string sha256_hex(const void* data, size_t len) {
    Sha256 h;
    h.update(data, len);
    return h.hex();
}

inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

inline std::string sha256_file(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
    check(f != nullptr, errc::io, "cannot open file for digest: " + path);
    Sha256 h;
    std::vector<unsigned char> buf(1 << 16);
    size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), f.get())) > 0) h.update(buf.data(), n);
    check(!std::ferror(f.get()), errc::io, "read error while digesting: " + path);
    return h.hex();
}

}  // namespace umtl

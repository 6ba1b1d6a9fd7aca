#pragma once

#include <cstddef>
#include <cstdint>

namespace katolab {

// FNV-1a 64-bit streaming digest, used for basis cache keys, Brownian
// increment fingerprints, and report round-trip checks.
struct Fnv1a {
    std::uint64_t state = 0xcbf29ce484222325ULL;

    void bytes(const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t k = 0; k < n; ++k) {
            state ^= b[k];
            state *= 0x100000001b3ULL;
        }
    }

    template <class T>
    void value(const T& v) {
        bytes(&v, sizeof v);
    }

    void doubles(const double* p, std::size_t n) { bytes(p, n * sizeof(double)); }

    std::uint64_t digest() const { return state; }
};

}  // namespace katolab

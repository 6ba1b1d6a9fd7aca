#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace katolab {

// Deterministic normal generator: mt19937_64 raw draws, 53-bit uniforms in
// (0,1], Box-Muller in the trig form. Spelled out rather than delegated to
// std::normal_distribution so identical seeds give bit-identical streams on
// every platform and standard library.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : gen_(seed) {}

    double uniform() {
        const double x = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        return x > 0.0 ? x : 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace katolab

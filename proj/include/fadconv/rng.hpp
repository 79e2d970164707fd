#ifndef FADCONV_RNG_HPP
#define FADCONV_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace fadconv {

// Seedable portable RNG. The raw stream is std::mt19937_64 (a standardized
// algorithm, bit-identical everywhere); the double conversions below are
// explicit so that uniform/normal draws are also platform-independent.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : gen_(seed) {}

    // Derive an independent stream from (seed, id) via splitmix64 mixing.
    static Rng derive(uint64_t seed, uint64_t id) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (id + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z = z ^ (z >> 31);
        return Rng(z);
    }

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(gen_() % static_cast<uint64_t>(hi - lo + 1));
    }

    // Box-Muller; draws two uniforms per pair of normals.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * M_PI * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::string serialize() const {
        std::ostringstream os;
        os.precision(17);  // round-trips any double exactly
        os << gen_ << " " << (has_spare_ ? 1 : 0) << " " << spare_;
        return os.str();
    }
    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int hs = 0;
        is >> gen_ >> hs >> spare_;
        has_spare_ = hs != 0;
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fadconv

#endif

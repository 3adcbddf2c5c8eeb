#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

namespace emocvae {

// Deterministic random stream. All draws go through explicit transforms on
// top of std::mt19937_64 (whose raw output sequence is pinned by the
// standard), so a seed fully determines every downstream artifact.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform double in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int range(int lo, int hi_exclusive) {
        return lo + int(below(uint64_t(hi_exclusive - lo)));
    }

    // standard normal via Box-Muller
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586477 * u2);
    }

    std::vector<double> normal_vec(int n) {
        std::vector<double> v(size_t(n), 0.0);
        for (auto& x : v) x = normal();
        return v;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[size_t(below(i))]);
        }
    }

    // index draw from non-negative weights (sum > 0)
    int weighted(const std::vector<double>& w) {
        double total = 0.0;
        for (double x : w) total += x;
        double r = uniform() * total;
        for (size_t i = 0; i < w.size(); ++i) {
            r -= w[i];
            if (r < 0.0) return int(i);
        }
        return int(w.size()) - 1;
    }

  private:
    std::mt19937_64 eng_;
};

// FNV-1a 64-bit content digest; used for manifests and determinism checks.
class Fnv1a {
  public:
    void update(const void* data, size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= uint64_t(p[i]);
            h_ *= 1099511628211ull;
        }
    }
    void update(const std::string& s) { update(s.data(), s.size()); }
    uint64_t value() const { return h_; }
    std::string hex() const {
        static const char* digits = "0123456789abcdef";
        std::string out(16, '0');
        uint64_t v = h_;
        for (int i = 15; i >= 0; --i) {
            out[size_t(i)] = digits[v & 0xf];
            v >>= 4;
        }
        return out;
    }

  private:
    uint64_t h_ = 1469598103934665603ull;
};

inline std::string digest_bytes(const void* data, size_t n) {
    Fnv1a f;
    f.update(data, n);
    return f.hex();
}

}  // namespace emocvae

#pragma once

// Hand-rolled generators for the property tests.

#include <algorithm>
#include <cstdint>
#include <random>

#include "wormsim/params.hpp"

namespace testing {

struct Gen {
    std::mt19937_64 engine;

    explicit Gen(std::uint64_t seed) : engine(seed) {}

    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(engine); }

    // Small populations with every characteristic exercised.
    wormsim::ModelParams params(int n_lo = 4, int n_hi = 40) {
        wormsim::ModelParams p;
        p.n_total = integer(n_lo, n_hi);
        p.beta = real(1e-4, 1e-2);
        p.coop_frac = coin(0.3) ? 1.0 : real(0.3, 1.0);
        p.immune_frac = coin(0.3) ? 0.0 : real(0.0, 0.8);
        p.on_prob = coin(0.3) ? 1.0 : real(0.2, 1.0);
        const int coop = static_cast<int>(p.coop_frac * p.n_total + 1e-9);
        // the integer pool can exceed c(1-i)N by a fraction of a node
        const int pool = std::min(coop - static_cast<int>(p.immune_frac * coop + 1e-9),
                                  static_cast<int>(p.coop_frac * (1.0 - p.immune_frac) * p.n_total + 1e-9));
        if (pool < 2) {
            p.coop_frac = 1.0;
            p.immune_frac = 0.0;
            return finish_seeds(p, p.n_total);
        }
        return finish_seeds(p, pool);
    }

private:
    wormsim::ModelParams finish_seeds(wormsim::ModelParams p, int pool) {
        p.i_a0 = integer(1, std::max(1, pool / 3));
        p.i_b0 = integer(coin(0.2) ? 0 : 1, std::max(1, pool - p.i_a0));
        return p;
    }
};

}  // namespace testing

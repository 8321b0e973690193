#pragma once

#include <string>
#include <string_view>

namespace wormsim {

// Which ODE system to evaluate. The basic system is the special case of the
// characteristic one with every node cooperative, non-immune and always on.
enum class ModelKind { basic, characteristic };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

struct ModelParams {
    double beta = 6e-6;       // pairwise contact rate, 1/s
    int n_total = 1000;       // N
    double coop_frac = 1.0;   // c
    double immune_frac = 0.0; // i, fraction of the cooperative nodes
    double on_prob = 1.0;     // p
    int i_a0 = 1;             // initial prey infectives
    int i_b0 = 1;             // initial predator infectives

    // Effective contact rate seen by both worms.
    double contact_rate() const { return on_prob * beta; }

    // c*N: the population the characteristic system conserves.
    double cooperative_mass() const { return coop_frac * n_total; }

    // N* = c(1-i)N, cooperative nodes that prey can infect.
    double susceptible_pool() const { return coop_frac * (1.0 - immune_frac) * n_total; }

    bool is_basic() const { return coop_frac == 1.0 && immune_frac == 0.0 && on_prob == 1.0; }
};

// Throws std::invalid_argument naming the first offending field.
void validate(const ModelParams& params);

}  // namespace wormsim

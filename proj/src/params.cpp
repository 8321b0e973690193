#include "wormsim/params.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wormsim {

std::string_view to_string(ModelKind kind) {
    return kind == ModelKind::basic ? "basic" : "characteristic";
}

ModelKind parse_model_kind(std::string_view text) {
    if (text == "basic") return ModelKind::basic;
    if (text == "characteristic") return ModelKind::characteristic;
    throw std::invalid_argument("unknown model kind '" + std::string(text) + "'");
}

namespace {

void require_fraction(double value, const char* name) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1], got " + std::to_string(value));
    }
}

}  // namespace

void validate(const ModelParams& params) {
    if (!(params.beta >= 0.0) || !std::isfinite(params.beta)) {
        throw std::invalid_argument("beta must be finite and >= 0");
    }
    if (params.n_total < 1) throw std::invalid_argument("n_total must be >= 1");
    require_fraction(params.coop_frac, "coop_frac");
    require_fraction(params.immune_frac, "immune_frac");
    require_fraction(params.on_prob, "on_prob");
    if (params.i_a0 < 0 || params.i_b0 < 0) throw std::invalid_argument("seed counts must be >= 0");
    // Seeds are cooperative and prey-susceptible.
    const double pool = params.susceptible_pool();
    if (params.i_a0 + params.i_b0 > pool + 1e-9) {
        throw std::invalid_argument("seed pools exhausted: i_a0 + i_b0 = " +
                                    std::to_string(params.i_a0 + params.i_b0) +
                                    " exceeds c(1-i)N = " + std::to_string(pool));
    }
}

}  // namespace wormsim

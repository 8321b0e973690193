#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "wormsim/metric_set.hpp"
#include "wormsim/params.hpp"

namespace wormsim {

// Continuum state. For the basic system s_star holds S and s_prime stays 0.
struct ModelState {
    double t = 0.0;
    double s_star = 0.0;
    double s_prime = 0.0;
    double i_a = 0.0;
    double i_b = 0.0;

    double total() const { return s_star + s_prime + i_a + i_b; }
};

// Time derivative of each compartment.
struct StateRates {
    double s_star = 0.0;
    double s_prime = 0.0;
    double i_a = 0.0;
    double i_b = 0.0;

    double sum() const { return s_star + s_prime + i_a + i_b; }
};

// Aggressive one-sided system with full cooperation, no immunity, always on.
// Throws std::invalid_argument if params are not that special case.
StateRates derivatives_basic(const ModelState& state, const ModelParams& params);

// Same system with cooperation c, prey immunity i and on-probability p.
// Every flow is scaled by p*beta.
StateRates derivatives_characteristic(const ModelState& state, const ModelParams& params);

StateRates derivatives(const ModelState& state, const ModelParams& params, ModelKind model);

// Seeding: both seeds come out of the cooperative non-immune pool, so
// S*(0) = c(1-i)N - I_A(0) - I_B(0) and S'(0) = ciN.
ModelState initial_state(const ModelParams& params, ModelKind model);

struct Trajectory {
    double step = 0.0;
    std::vector<ModelState> states;
    ModelParams params;
    ModelKind model = ModelKind::characteristic;
    std::vector<std::string> warnings;
};

// beta*N*step; integration is refused above 0.1 and warned about above 0.01.
double stability_number(const ModelParams& params, double step);

// Step with beta*N*step = 0.005.
double default_step(const ModelParams& params);

// Fixed-step classical RK4 from t = 0 to the first grid point >= horizon.
Trajectory integrate(const ModelParams& params, ModelKind model, double step, double horizon);

// RK4 until prey is removed and the predator holds every cooperative node,
// or until the dynamics have frozen, or until max_horizon. A non-positive
// step or max_horizon selects the defaults.
Trajectory integrate_until_settled(const ModelParams& params, ModelKind model, double step = 0.0,
                                   double max_horizon = 0.0);

// Half-a-node thresholds for declaring "all removed" / "all infected".
struct ContinuumThresholds {
    double removed = 0.5;
    double infected_all = 0.5;
};

MetricSet model_metrics(const Trajectory& traj, const ContinuumThresholds& thresholds = {});

// (2 ln N + 0.5772) / (p N beta)
double ta_closed_form(const ModelParams& params);

// Predator seed count at which dI_A/dt = 0 at t = 0: S(0) for the basic
// system, S*(0) for the characteristic one (both from initial_state).
double suppression_threshold(const ModelParams& params, ModelKind model);

// Header t,s_star,s_prime,i_a,i_b.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace wormsim

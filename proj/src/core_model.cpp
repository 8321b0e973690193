#include "wormsim/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wormsim {

StateRates derivatives_basic(const ModelState& state, const ModelParams& params) {
    if (!params.is_basic()) {
        throw std::invalid_argument("basic model requires coop_frac = 1, immune_frac = 0, on_prob = 1");
    }
    const double b = params.beta;
    const double s = state.s_star;
    StateRates rates;
    rates.s_star = -b * s * (state.i_a + state.i_b);
    rates.i_a = b * state.i_a * (s - state.i_b);
    rates.i_b = b * (s * state.i_b + state.i_a * state.i_b);
    return rates;
}

StateRates derivatives_characteristic(const ModelState& state, const ModelParams& params) {
    const double r = params.contact_rate();
    StateRates rates;
    rates.s_star = -r * state.s_star * (state.i_a + state.i_b);
    rates.s_prime = -r * state.s_prime * state.i_b;
    rates.i_a = r * state.i_a * (state.s_star - state.i_b);
    rates.i_b = r * ((state.s_star + state.s_prime) * state.i_b + state.i_a * state.i_b);
    return rates;
}

StateRates derivatives(const ModelState& state, const ModelParams& params, ModelKind model) {
    return model == ModelKind::basic ? derivatives_basic(state, params)
                                     : derivatives_characteristic(state, params);
}

ModelState initial_state(const ModelParams& params, ModelKind model) {
    validate(params);
    if (model == ModelKind::basic && !params.is_basic()) {
        throw std::invalid_argument("basic model requires coop_frac = 1, immune_frac = 0, on_prob = 1");
    }
    ModelState s;
    s.i_a = params.i_a0;
    s.i_b = params.i_b0;
    s.s_star = params.susceptible_pool() - params.i_a0 - params.i_b0;
    s.s_prime = params.coop_frac * params.immune_frac * params.n_total;
    return s;
}

double stability_number(const ModelParams& params, double step) {
    return params.beta * params.n_total * step;
}

double default_step(const ModelParams& params) {
    if (params.beta <= 0.0) return 1.0;
    return 0.005 / (params.beta * params.n_total);
}

namespace {

ModelState advance(const ModelState& s, const StateRates& k, double h) {
    ModelState out = s;
    out.s_star += h * k.s_star;
    out.s_prime += h * k.s_prime;
    out.i_a += h * k.i_a;
    out.i_b += h * k.i_b;
    return out;
}

ModelState rk4_step(const ModelState& s, const ModelParams& params, ModelKind model, double h) {
    const StateRates k1 = derivatives(s, params, model);
    const StateRates k2 = derivatives(advance(s, k1, h / 2), params, model);
    const StateRates k3 = derivatives(advance(s, k2, h / 2), params, model);
    const StateRates k4 = derivatives(advance(s, k3, h), params, model);
    ModelState out = s;
    out.s_star += h / 6 * (k1.s_star + 2 * k2.s_star + 2 * k3.s_star + k4.s_star);
    out.s_prime += h / 6 * (k1.s_prime + 2 * k2.s_prime + 2 * k3.s_prime + k4.s_prime);
    out.i_a += h / 6 * (k1.i_a + 2 * k2.i_a + 2 * k3.i_a + k4.i_a);
    out.i_b += h / 6 * (k1.i_b + 2 * k2.i_b + 2 * k3.i_b + k4.i_b);
    return out;
}

void check_state(const ModelState& s, const ModelParams& params) {
    const double tol = 1e-6 * params.n_total;
    if (s.s_star < -tol || s.s_prime < -tol || s.i_a < -tol || s.i_b < -tol) {
        std::ostringstream msg;
        msg << "integration diverged at t=" << s.t << ": s_star=" << s.s_star << " s_prime=" << s.s_prime
            << " i_a=" << s.i_a << " i_b=" << s.i_b;
        throw std::runtime_error(msg.str());
    }
    if (std::abs(s.total() - params.cooperative_mass()) > tol) {
        std::ostringstream msg;
        msg << "conservation violated at t=" << s.t << ": total=" << s.total()
            << " expected=" << params.cooperative_mass();
        throw std::runtime_error(msg.str());
    }
}

Trajectory start(const ModelParams& params, ModelKind model, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) throw std::invalid_argument("step must be > 0");
    Trajectory traj;
    traj.params = params;
    traj.model = model;
    traj.step = step;
    traj.states.push_back(initial_state(params, model));
    const double stability = stability_number(params, step);
    if (stability > 0.1) {
        throw std::invalid_argument("beta*N*step = " + std::to_string(stability) + " exceeds 0.1");
    }
    if (stability > 0.01) {
        traj.warnings.push_back("beta*N*step = " + std::to_string(stability) +
                                " exceeds 0.01; accuracy may suffer");
    }
    return traj;
}

// Runs until `stop` returns true for the newest state or max_steps is hit.
void run_steps(Trajectory& traj, std::size_t max_steps, const std::function<bool(const ModelState&)>& stop) {
    for (std::size_t k = 1; k <= max_steps; ++k) {
        ModelState next = rk4_step(traj.states.back(), traj.params, traj.model, traj.step);
        next.t = static_cast<double>(k) * traj.step;
        check_state(next, traj.params);
        traj.states.push_back(next);
        if (stop && stop(next)) break;
    }
}

}  // namespace

Trajectory integrate(const ModelParams& params, ModelKind model, double step, double horizon) {
    Trajectory traj = start(params, model, step);
    if (!(horizon >= step)) throw std::invalid_argument("horizon must be >= step");
    const auto steps = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
    traj.states.reserve(steps + 1);
    run_steps(traj, steps, {});
    return traj;
}

Trajectory integrate_until_settled(const ModelParams& params, ModelKind model, double step, double max_horizon) {
    if (step <= 0.0) step = default_step(params);
    Trajectory traj = start(params, model, step);
    const double rate = params.contact_rate();
    const double n = params.n_total;
    if (max_horizon <= 0.0) max_horizon = rate > 0.0 ? 500.0 / (rate * n) : step;
    const auto steps = static_cast<std::size_t>(std::ceil(std::max(max_horizon, step) / step - 1e-9));
    const double mass = params.cooperative_mass();
    const ContinuumThresholds th;
    run_steps(traj, steps, [&](const ModelState& s) {
        if (s.i_a < th.removed && mass - s.i_b < th.infected_all) return true;
        const StateRates d = derivatives(s, params, model);
        const double fastest =
            std::max({std::abs(d.s_star), std::abs(d.s_prime), std::abs(d.i_a), std::abs(d.i_b)});
        return fastest < 1e-9 * rate * n;
    });
    return traj;
}

MetricSet model_metrics(const Trajectory& traj, const ContinuumThresholds& thresholds) {
    if (traj.states.empty()) throw std::invalid_argument("empty trajectory");
    const auto& st = traj.states;
    const ModelParams& params = traj.params;
    const double dt = traj.step;
    const double rate = traj.model == ModelKind::basic ? params.beta : params.contact_rate();
    const double mass = params.cooperative_mass();

    MetricSet m;
    double inflow = 0.0;
    for (std::size_t k = 0; k + 1 < st.size(); ++k) {
        const double f0 = rate * st[k].s_star * st[k].i_a;
        const double f1 = rate * st[k + 1].s_star * st[k + 1].i_a;
        inflow += 0.5 * dt * (f0 + f1);
    }
    m.ti = st.front().i_a + inflow;
    for (const auto& s : st) m.mi = std::max(m.mi, s.i_a);

    for (const auto& s : st) {
        if (s.i_a < thresholds.removed) {
            m.tr = s.t;
            break;
        }
    }
    for (const auto& s : st) {
        if (mass - s.i_b < thresholds.infected_all) {
            m.ta = s.t;
            break;
        }
    }

    // Left Riemann sum of I_A up to TR.
    const double tl_end = m.tr ? *m.tr : st.back().t;
    m.tl_censored = !m.tr;
    for (const auto& s : st) {
        if (s.t >= tl_end) break;
        m.tl += s.i_a * dt;
    }

    const double tol = 1e-6 * params.n_total;
    if (m.mi > m.ti) {
        if (m.mi - m.ti > tol) throw std::logic_error("model metrics violate MI <= TI");
        m.ti = m.mi;
    }
    if (m.ti > 0.0) {
        m.al = m.tl / m.ti;
    } else {
        m.al_undefined = true;
    }
    const double pool = params.susceptible_pool();
    if (pool > 0.0) {
        m.ti_relative = m.ti / pool;
        m.mi_relative = m.mi / pool;
    }
    return m;
}

double ta_closed_form(const ModelParams& params) {
    if (!(params.on_prob > 0.0) || !(params.beta > 0.0) || params.n_total < 2) {
        throw std::invalid_argument("closed-form TA requires on_prob > 0, beta > 0, n_total >= 2");
    }
    const double n = params.n_total;
    return (2.0 * std::log(n) + 0.5772) / (params.on_prob * n * params.beta);
}

double suppression_threshold(const ModelParams& params, ModelKind model) {
    return std::max(0.0, initial_state(params, model).s_star);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
    const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    out << "t,s_star,s_prime,i_a,i_b\n";
    for (const auto& s : traj.states) {
        out << s.t << ',' << s.s_star << ',' << s.s_prime << ',' << s.i_a << ',' << s.i_b << '\n';
    }
    out.precision(old_precision);
}

}  // namespace wormsim

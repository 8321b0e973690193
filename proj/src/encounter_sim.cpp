#include "wormsim/encounter_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "wormsim/metrics.hpp"
#include "wormsim/parallel.hpp"

namespace wormsim {

std::string_view to_string(Compartment c) {
    switch (c) {
        case Compartment::Susceptible: return "S";
        case Compartment::ImmuneSusceptible: return "S'";
        case Compartment::PreyInfected: return "I_A";
        case Compartment::PredatorInfected: return "I_B";
        case Compartment::NonCooperative: return "X";
    }
    return "?";
}

std::string_view to_string(TransitionCause cause) {
    switch (cause) {
        case TransitionCause::prey_infection: return "prey_infection";
        case TransitionCause::vaccination: return "vaccination";
        case TransitionCause::termination: return "termination";
        case TransitionCause::seed: return "seed";
    }
    return "?";
}

bool is_allowed_edge(Compartment from, Compartment to) {
    using C = Compartment;
    return (from == C::Susceptible && (to == C::PreyInfected || to == C::PredatorInfected)) ||
           (from == C::ImmuneSusceptible && to == C::PredatorInfected) ||
           (from == C::PreyInfected && to == C::PredatorInfected);
}

UniformEncounterGenerator::UniformEncounterGenerator(const ModelParams& params, Rng rng, double horizon)
    : rng_(rng),
      n_(params.n_total),
      total_rate_(params.beta * 0.5 * params.n_total * (params.n_total - 1.0)),
      horizon_(horizon) {}

std::optional<EncounterEvent> UniformEncounterGenerator::next() {
    if (n_ < 2 || !(total_rate_ > 0.0) || now_ > horizon_) return std::nullopt;
    now_ += rng_.exponential(total_rate_);
    if (now_ > horizon_) return std::nullopt;
    const auto u = static_cast<int>(rng_.below(static_cast<std::uint64_t>(n_)));
    auto v = static_cast<int>(rng_.below(static_cast<std::uint64_t>(n_ - 1)));
    if (v >= u) ++v;
    return EncounterEvent{now_, u, v, EventSource::generated};
}

namespace {

struct RuleOutcome {
    bool target_is_u;
    Compartment to;
    TransitionCause cause;
};

// Exactly one rule per active encounter, or none.
std::optional<RuleOutcome> resolve(Compartment u, Compartment v) {
    using C = Compartment;
    auto one_sided = [](C a, C b) -> std::optional<std::pair<C, TransitionCause>> {
        if (a == C::PredatorInfected) {
            if (b == C::PreyInfected) return std::pair{C::PredatorInfected, TransitionCause::termination};
            if (b == C::Susceptible || b == C::ImmuneSusceptible) {
                return std::pair{C::PredatorInfected, TransitionCause::vaccination};
            }
        }
        if (a == C::PreyInfected && b == C::Susceptible) {
            return std::pair{C::PreyInfected, TransitionCause::prey_infection};
        }
        return std::nullopt;
    };
    if (auto r = one_sided(u, v)) return RuleOutcome{false, r->first, r->second};
    if (auto r = one_sided(v, u)) return RuleOutcome{true, r->first, r->second};
    return std::nullopt;
}

void set_compartment(NodeState& state, Compartment to, double t) {
    if (to == Compartment::PreyInfected) state.infected_at = t;
    if (state.compartment == Compartment::PreyInfected) state.removed_at = t;
    state.compartment = to;
}

}  // namespace

std::optional<Transition> apply_encounter(const EncounterEvent& event, std::span<NodeState> states,
                                          std::span<const NodeProfile> profiles, double on_prob, Rng& rng) {
    const auto n = static_cast<int>(states.size());
    if (event.node_u < 0 || event.node_u >= n || event.node_v < 0 || event.node_v >= n ||
        profiles.size() != states.size()) {
        throw std::out_of_range("encounter references unknown node id");
    }
    if (event.node_u == event.node_v) throw std::invalid_argument("encounter of a node with itself");
    NodeState& u = states[event.node_u];
    NodeState& v = states[event.node_v];
    if (!profiles[event.node_u].cooperative || !profiles[event.node_v].cooperative) return std::nullopt;
    if (u.awaiting_seed || v.awaiting_seed) return std::nullopt;
    if (!rng.bernoulli(on_prob)) return std::nullopt;

    const auto rule = resolve(u.compartment, v.compartment);
    if (!rule) return std::nullopt;
    NodeState& target = rule->target_is_u ? u : v;
    Transition tr{event.time, rule->target_is_u ? event.node_u : event.node_v, target.compartment, rule->to,
                  rule->cause};
    set_compartment(target, rule->to, event.time);
    return tr;
}

int cooperative_count(const ModelParams& params) {
    return static_cast<int>(std::floor(params.coop_frac * params.n_total + 1e-9));
}

int immune_count(const ModelParams& params) {
    return static_cast<int>(std::floor(params.immune_frac * cooperative_count(params) + 1e-9));
}

std::vector<NodeProfile> assign_profiles(int n, int cooperative, int immune, std::span<const int> prey_seeds,
                                         std::span<const int> predator_seeds, Rng& rng) {
    if (cooperative < 0 || cooperative > n || immune < 0 || immune > cooperative) {
        throw std::invalid_argument("inconsistent cooperative/immune counts");
    }
    const auto seeds = static_cast<int>(prey_seeds.size() + predator_seeds.size());
    if (seeds > cooperative - immune) {
        throw std::invalid_argument("seed pools exhausted: " + std::to_string(seeds) + " seeds but only " +
                                    std::to_string(cooperative - immune) + " cooperative non-immune nodes");
    }
    std::vector<NodeProfile> profiles(static_cast<std::size_t>(n));
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    for (int id = 0; id < n; ++id) profiles[id].node_id = id;
    auto mark = [&](int id, SeedRole role) {
        if (id < 0 || id >= n) throw std::out_of_range("seed node id out of range");
        if (taken[id]) throw std::invalid_argument("node " + std::to_string(id) + " seeded twice");
        taken[id] = 1;
        profiles[id].role = role;
    };
    for (int id : prey_seeds) mark(id, SeedRole::prey_seed);
    for (int id : predator_seeds) mark(id, SeedRole::predator_seed);

    std::vector<int> rest;
    rest.reserve(static_cast<std::size_t>(n));
    for (int id = 0; id < n; ++id) {
        if (!taken[id]) rest.push_back(id);
    }
    rng.shuffle(std::span<int>(rest));
    const auto plain = static_cast<std::size_t>(cooperative - immune - seeds);
    for (std::size_t k = 0; k < rest.size(); ++k) {
        NodeProfile& p = profiles[rest[k]];
        p.cooperative = k < plain + static_cast<std::size_t>(immune);
        p.immune = p.cooperative && k >= plain;
    }
    return profiles;
}

RoundEngine::RoundEngine(std::vector<NodeProfile> profiles, double on_prob, Rng trial_rng,
                         std::vector<SeedInjection> seeds)
    : profiles_(std::move(profiles)), on_prob_(on_prob), rng_(trial_rng), pending_(std::move(seeds)) {
    states_.resize(profiles_.size());
    for (std::size_t k = 0; k < profiles_.size(); ++k) {
        states_[k].compartment = profiles_[k].initial_compartment();
        ++counts_[static_cast<int>(states_[k].compartment)];
    }
    std::stable_sort(pending_.begin(), pending_.end(),
                     [](const SeedInjection& a, const SeedInjection& b) { return a.time < b.time; });
    for (const auto& seed : pending_) {
        if (seed.node < 0 || seed.node >= static_cast<int>(states_.size())) {
            throw std::out_of_range("seed node id out of range");
        }
        NodeState& st = states_[seed.node];
        if (st.compartment != Compartment::Susceptible || st.awaiting_seed) {
            throw std::invalid_argument("seed node " + std::to_string(seed.node) +
                                        " is not an unclaimed cooperative non-immune node");
        }
        if (seed.to != Compartment::PreyInfected && seed.to != Compartment::PredatorInfected) {
            throw std::invalid_argument("seeds must inject prey or predator");
        }
        st.awaiting_seed = true;
        if (seed.to == Compartment::PreyInfected) {
            ++log_.prey_seeds;
        } else {
            ++log_.predator_seeds;
        }
    }
}

void RoundEngine::record(const Transition& tr) {
    --counts_[static_cast<int>(tr.from)];
    ++counts_[static_cast<int>(tr.to)];
    log_.transitions.push_back(tr);
}

void RoundEngine::advance_to(double t) {
    while (next_seed_ < pending_.size() && pending_[next_seed_].time <= t) {
        const SeedInjection& seed = pending_[next_seed_++];
        NodeState& st = states_[seed.node];
        st.awaiting_seed = false;
        const Transition tr{seed.time, seed.node, st.compartment, seed.to, TransitionCause::seed};
        set_compartment(st, seed.to, seed.time);
        record(tr);
    }
}

std::optional<Transition> RoundEngine::process(const EncounterEvent& event) {
    advance_to(event.time);
    auto tr = apply_encounter(event, states_, profiles_, on_prob_, rng_);
    if (tr) record(*tr);
    return tr;
}

bool RoundEngine::absorbed() const {
    if (next_seed_ < pending_.size()) return false;
    const int s = count(Compartment::Susceptible);
    const int s_immune = count(Compartment::ImmuneSusceptible);
    const int prey = count(Compartment::PreyInfected);
    const int predator = count(Compartment::PredatorInfected);
    const bool predator_done = predator == 0 || (prey == 0 && s == 0 && s_immune == 0);
    const bool prey_done = prey == 0 || s == 0;
    return predator_done && prey_done;
}

EventLog RoundEngine::finish(double horizon) && {
    advance_to(horizon);
    log_.horizon = horizon;
    log_.profiles = std::move(profiles_);
    return std::move(log_);
}

EventLog run_round(const RoundConfig& config, EncounterStream& encounters) {
    const ModelParams& params = config.params;
    validate(params);
    if (!(config.horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");

    Rng profile_rng(derive_seed(config.rng_seed, 0));
    Rng trial_rng(derive_seed(config.rng_seed, 2));

    const int n = params.n_total;
    const int coop = cooperative_count(params);
    const int immune = immune_count(params);
    if (coop - immune < params.i_a0 + params.i_b0) {
        throw std::invalid_argument("seed pools exhausted: c(1-i)N < i_a0 + i_b0");
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    profile_rng.shuffle(std::span<int>(order));
    const std::span<const int> prey(order.data(), static_cast<std::size_t>(params.i_a0));
    const std::span<const int> predator(order.data() + params.i_a0, static_cast<std::size_t>(params.i_b0));
    auto profiles = assign_profiles(n, coop, immune, prey, predator, profile_rng);

    const double predator_at = std::max(0.0, config.arrival_delay);
    const double prey_at = std::max(0.0, -config.arrival_delay);
    std::vector<SeedInjection> seeds;
    for (int id : prey) seeds.push_back({prey_at, id, Compartment::PreyInfected});
    for (int id : predator) seeds.push_back({predator_at, id, Compartment::PredatorInfected});

    RoundEngine engine(std::move(profiles), params.on_prob, trial_rng, std::move(seeds));
    engine.advance_to(0.0);
    while (!engine.absorbed()) {
        auto event = encounters.next();
        if (!event || event->time > config.horizon) break;
        engine.process(*event);
    }
    return std::move(engine).finish(config.horizon);
}

EventLog run_round(const RoundConfig& config) {
    UniformEncounterGenerator encounters(config.params, Rng(derive_seed(config.rng_seed, 1)), config.horizon);
    return run_round(config, encounters);
}

std::vector<RoundOutcome> run_rounds(const RoundConfig& config_template, const BatchOptions& options) {
    if (options.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    std::vector<RoundOutcome> outcomes(options.rounds);
    parallel_for(options.rounds, options.threads, [&](std::size_t k) {
        RoundOutcome& out = outcomes[k];
        out.index = k;
        out.seed = derive_seed(options.master_seed, k);
        RoundConfig config = config_template;
        config.rng_seed = out.seed;
        try {
            EventLog log = run_round(config);
            out.metrics = extract_metrics(log);
            if (options.keep_logs) out.log = std::move(log);
        } catch (const std::exception& e) {
            out.error = e.what();
        }
    });
    return outcomes;
}

}  // namespace wormsim

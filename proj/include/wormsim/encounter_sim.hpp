#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wormsim/metric_set.hpp"
#include "wormsim/params.hpp"
#include "wormsim/random.hpp"

namespace wormsim {

enum class Compartment : std::uint8_t {
    Susceptible,        // cooperative, prey-susceptible
    ImmuneSusceptible,  // cooperative, immune to prey, predator-susceptible
    PreyInfected,
    PredatorInfected,
    NonCooperative,
};

std::string_view to_string(Compartment c);

// Allowed state changes: S->A, S->B, S'->B, A->B.
bool is_allowed_edge(Compartment from, Compartment to);

enum class SeedRole : std::uint8_t { none, prey_seed, predator_seed };

struct NodeProfile {
    int node_id = 0;
    bool cooperative = true;
    bool immune = false;
    SeedRole role = SeedRole::none;

    Compartment initial_compartment() const {
        if (!cooperative) return Compartment::NonCooperative;
        return immune ? Compartment::ImmuneSusceptible : Compartment::Susceptible;
    }
};

struct NodeState {
    Compartment compartment = Compartment::Susceptible;
    std::optional<double> infected_at;  // entered PreyInfected
    std::optional<double> removed_at;   // left PreyInfected
    bool awaiting_seed = false;         // seed not yet injected: inert
};

enum class EventSource : std::uint8_t { generated, trace };

struct EncounterEvent {
    double time = 0.0;
    int node_u = 0;
    int node_v = 0;
    EventSource source = EventSource::generated;
};

enum class TransitionCause : std::uint8_t { prey_infection, vaccination, termination, seed };

std::string_view to_string(TransitionCause cause);

struct Transition {
    double time = 0.0;
    int node_id = 0;
    Compartment from = Compartment::Susceptible;
    Compartment to = Compartment::Susceptible;
    TransitionCause cause = TransitionCause::seed;

    bool operator==(const Transition&) const = default;
};

// Complete history of one round.
struct EventLog {
    std::vector<Transition> transitions;
    double horizon = 0.0;
    std::vector<NodeProfile> profiles;
    int prey_seeds = 0;      // prey seeds scheduled
    int predator_seeds = 0;  // predator seeds scheduled
};

struct RoundConfig {
    ModelParams params;
    std::uint64_t rng_seed = 0;
    // Predator injection time minus prey injection time. Negative injects
    // the predator |arrival_delay| seconds before the prey; the earlier
    // worm starts at t = 0.
    double arrival_delay = 0.0;
    double horizon = 0.0;
};

// Source of time-ordered encounters.
class EncounterStream {
public:
    virtual ~EncounterStream() = default;
    virtual std::optional<EncounterEvent> next() = 0;
};

// Exact continuous-time uniform encounters: global gaps ~ Exp(beta N(N-1)/2),
// each event's pair uniform over unordered pairs. Ends at `horizon`.
class UniformEncounterGenerator final : public EncounterStream {
public:
    UniformEncounterGenerator(const ModelParams& params, Rng rng, double horizon);
    std::optional<EncounterEvent> next() override;

private:
    Rng rng_;
    int n_;
    double total_rate_;
    double horizon_;
    double now_ = 0.0;
};

// Replays a fixed event sequence.
class SpanEncounterStream final : public EncounterStream {
public:
    explicit SpanEncounterStream(std::span<const EncounterEvent> events) : events_(events) {}
    std::optional<EncounterEvent> next() override {
        if (pos_ == events_.size()) return std::nullopt;
        return events_[pos_++];
    }

private:
    std::span<const EncounterEvent> events_;
    std::size_t pos_ = 0;
};

// One encounter: non-cooperative or not-yet-injected endpoints make it a
// no-op; otherwise a single Bernoulli(on_prob) link trial, and if the link is
// up at most one rule fires. Mutates `states` and returns the transition.
// Throws std::out_of_range on an unknown node id.
std::optional<Transition> apply_encounter(const EncounterEvent& event, std::span<NodeState> states,
                                          std::span<const NodeProfile> profiles, double on_prob, Rng& rng);

// floor(cN) and floor(i * floor(cN)), robust to representation error.
int cooperative_count(const ModelParams& params);
int immune_count(const ModelParams& params);

// Assigns profiles over `n` nodes. Nodes listed in prey_seeds/predator_seeds
// are forced cooperative and non-immune; the remaining cooperative and immune
// slots are filled in random order.
std::vector<NodeProfile> assign_profiles(int n, int cooperative, int immune, std::span<const int> prey_seeds,
                                         std::span<const int> predator_seeds, Rng& rng);

struct SeedInjection {
    double time = 0.0;
    int node = 0;
    Compartment to = Compartment::PreyInfected;
};

// State machine for a single round. Seeds are inert until their injection
// time; absorbed() is true once no further transition is possible.
class RoundEngine {
public:
    RoundEngine(std::vector<NodeProfile> profiles, double on_prob, Rng trial_rng,
                std::vector<SeedInjection> seeds);

    // Injects every seed scheduled at or before t.
    void advance_to(double t);
    std::optional<Transition> process(const EncounterEvent& event);
    bool absorbed() const;

    std::span<const NodeState> states() const { return states_; }
    int count(Compartment c) const { return counts_[static_cast<int>(c)]; }

    EventLog finish(double horizon) &&;

private:
    void record(const Transition& tr);

    std::vector<NodeProfile> profiles_;
    std::vector<NodeState> states_;
    double on_prob_;
    Rng rng_;
    std::vector<SeedInjection> pending_;  // sorted by time, consumed from the front
    std::size_t next_seed_ = 0;
    int counts_[5] = {0, 0, 0, 0, 0};
    EventLog log_;
};

// Uniform-encounter round: profiles, encounters and link trials each draw
// from their own stream derived from config.rng_seed.
EventLog run_round(const RoundConfig& config);

// Same, with encounters supplied by the caller.
EventLog run_round(const RoundConfig& config, EncounterStream& encounters);

struct RoundOutcome {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::optional<EventLog> log;  // kept only when requested
    std::optional<MetricSet> metrics;
    std::string error;            // non-empty when the round failed
};

struct BatchOptions {
    std::size_t rounds = 1000;
    std::uint64_t master_seed = 1;
    int threads = 1;
    bool keep_logs = false;
};

// Round k runs with rng_seed = derive_seed(master_seed, k). Results are in
// round order whatever the thread count; a failing round records its error.
std::vector<RoundOutcome> run_rounds(const RoundConfig& config_template, const BatchOptions& options);

}  // namespace wormsim

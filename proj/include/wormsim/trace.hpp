#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "wormsim/encounter_sim.hpp"

namespace wormsim::trace {

// Maps external identifiers (MAC addresses, AP names, integers) to dense ids.
class NameTable {
public:
    int intern(std::string_view name);
    int find(std::string_view name) const;  // -1 if absent
    const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
    int size() const { return static_cast<int>(names_.size()); }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> ids_;
};

struct AssociationRecord {
    int node = 0;
    int ap = 0;
    double t_start = 0.0;
    double t_end = 0.0;
};

// Two nodes at the same AP over [t_start, t_end]; node_u < node_v.
struct DerivedEncounter {
    int node_u = 0;
    int node_v = 0;
    double t_start = 0.0;
    double t_end = 0.0;

    double duration() const { return t_end - t_start; }
    bool operator==(const DerivedEncounter&) const = default;
};

struct ParseIssue {
    std::size_t line = 0;
    std::string message;
};

struct ParseReport {
    std::size_t data_lines = 0;
    std::size_t dropped_zero_duration = 0;
    std::vector<ParseIssue> malformed;
    std::vector<ParseIssue> anomalies;  // well-formed but rejected records
    std::vector<std::string> warnings;
};

// Timestamps are shifted so the earliest accepted start is 0; time_offset
// holds the shift.
struct AssociationTrace {
    NameTable nodes;
    NameTable aps;
    std::vector<AssociationRecord> records;
    double time_offset = 0.0;
    double duration = 0.0;  // latest end after normalization
};

struct EncounterTrace {
    NameTable nodes;
    std::vector<DerivedEncounter> encounters;  // sorted by (t_start, node_u, node_v)
    double time_offset = 0.0;
    double duration = 0.0;
    std::vector<double> online_time;  // per node; only for association input
};

enum class TraceFormat { associations, encounters };
TraceFormat parse_trace_format(std::string_view text);

// CSV with header node_id,ap_id,t_start,t_end. Zero-length records are
// dropped and counted; a node overlapping itself at one AP keeps the first
// record and logs the rest as anomalies. More than max_malformed_frac
// malformed lines aborts with std::runtime_error.
AssociationTrace parse_associations(std::istream& in, ParseReport& report, double max_malformed_frac = 0.01);

// CSV with header node_u,node_v,t_start,t_end.
EncounterTrace parse_encounters(std::istream& in, ParseReport& report, double max_malformed_frac = 0.01);

// Reads either format from disk; association input is turned into
// encounters. Throws std::runtime_error if the file cannot be read.
EncounterTrace load_trace(const std::filesystem::path& path, TraceFormat format, ParseReport& report);

// All positive-length pairwise overlaps at a common AP, by sweep line.
std::vector<DerivedEncounter> derive_encounters(std::span<const AssociationRecord> records);

// Sum of association time per node.
std::vector<double> online_time(std::span<const AssociationRecord> records, int n_nodes);

struct Histogram {
    double lo = 0.0;
    double width = 1.0;
    std::vector<std::size_t> counts;
};

Histogram make_histogram(std::span<const double> values, std::size_t bins);

struct TraceStats {
    int n_nodes = 0;
    double duration = 0.0;
    std::size_t total_encounters = 0;
    std::vector<std::size_t> encounters;    // per node
    std::vector<std::size_t> unique_peers;  // per node
    std::vector<double> beta_hat;           // encounters_i / (T (N-1))
    double mean_beta = 0.0;
    double median_beta = 0.0;
    double median_unique = 0.0;
    Histogram encounter_histogram;
    Histogram unique_histogram;
    double top20_share = 0.0;              // share of all encounters held by the top 20% of nodes
    double below20_unique_fraction = 0.0;  // nodes meeting fewer than 20% of the others
};

TraceStats compute_stats(std::span<const DerivedEncounter> encounters, int n_nodes, double duration,
                         std::size_t bins = 50);

// Share of the total held by the top ceil(fraction * n) entries.
double top_share(std::span<const std::size_t> counts, double fraction);

nlohmann::json to_json(const TraceStats& stats);

// bin_lo,bin_hi,total_encounters,unique_encounters
void write_histogram_csv(std::ostream& out, const TraceStats& stats);

enum class Scenario { fast_predator, slow_predator };
Scenario parse_scenario(std::string_view text);
std::string_view to_string(Scenario s);

struct SeedPlanOptions {
    double group_frac = 0.03;
    double arrival_delay = 539795.0;  // magnitude; the scenario sets the sign
    double high_quantile = 0.9;       // band centres in the ascending ranking
    double low_quantile = 0.6;
    std::vector<double> ranking;      // overrides beta_hat when non-empty
};

struct SeedPlan {
    std::vector<int> predator_group;
    std::vector<int> prey_group;
    Scenario scenario = Scenario::fast_predator;
    double arrival_delay = 0.0;  // same sign convention as RoundConfig
};

// Ranks nodes present in the trace and takes two disjoint bands of
// ceil(group_frac * N) nodes. fast_predator gives the higher band to the
// predator and injects it first; slow_predator mirrors both.
SeedPlan select_seeds(const TraceStats& stats, Scenario scenario, const SeedPlanOptions& options = {});

struct ReplayOptions {
    double coop_frac = 1.0;
    double immune_frac = 0.0;
    double on_prob = 1.0;
    // 0: one opportunity per encounter at its start. Otherwise an extra
    // opportunity every `opportunity_interval` seconds of overlap.
    double opportunity_interval = 0.0;
};

// Immutable trace prepared for repeated replay.
class TraceReplayer {
public:
    TraceReplayer(std::span<const DerivedEncounter> encounters, int n_nodes, double trace_end,
                  const ReplayOptions& options = {});

    // One round: a seed drawn uniformly from each group, profiles sampled
    // with the seeds forced cooperative, then every encounter in time order.
    // Throws std::invalid_argument if a seed node never appears in the trace.
    EventLog replay(const SeedPlan& plan, std::uint64_t rng_seed) const;

    int n_nodes() const { return n_nodes_; }
    double trace_end() const { return trace_end_; }

private:
    std::vector<EncounterEvent> events_;
    std::vector<char> present_;
    int n_nodes_;
    double trace_end_;
    ReplayOptions options_;
};

EventLog replay_round(std::span<const DerivedEncounter> encounters, int n_nodes, double trace_end,
                      const SeedPlan& plan, const ReplayOptions& options, std::uint64_t rng_seed);

std::vector<RoundOutcome> replay_rounds(const TraceReplayer& replayer, const SeedPlan& plan,
                                        const BatchOptions& options);

struct SyntheticTraceConfig {
    int n_nodes = 1000;
    double duration = 62.0 * 86400.0;
    double mean_beta = 1e-7;      // mean pairwise rate over all pairs
    double skew = 1.5;            // log-normal sigma of node activity; 0 = uniform
    double mean_contact = 600.0;  // mean encounter length, s
    std::uint64_t seed = 1;
};

struct SyntheticTrace {
    std::vector<DerivedEncounter> encounters;
    std::vector<double> weights;  // node activity, normalized so mean pair product is 1
    double duration = 0.0;
};

// Pair (u, v) meets as a Poisson process of rate mean_beta * w_u * w_v.
SyntheticTrace generate_synthetic_trace(const SyntheticTraceConfig& config);

// node_u,node_v,t_start,t_end; names from `nodes` when given.
void write_encounter_csv(std::ostream& out, std::span<const DerivedEncounter> encounters,
                         const NameTable* nodes = nullptr);

}  // namespace wormsim::trace

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wormsim/core_model.hpp"
#include "wormsim/metrics.hpp"
#include "wormsim/trace.hpp"

namespace wormsim::experiment {

// Y is the predator-to-prey seed ratio I_B(0)/I_A(0).
enum class SweepAxis { Y, c, i, p };
enum class Mode { ode, uniform_sim, trace_replay, compare };
enum class Aggregation { mean, median, both };

std::string_view to_string(SweepAxis axis);
std::string_view to_string(Mode mode);
std::string_view to_string(Aggregation agg);
SweepAxis parse_axis(std::string_view text);
Mode parse_mode(std::string_view text);
Aggregation parse_aggregation(std::string_view text);

struct TraceSource {
    std::string path;  // empty: generate from `synthetic`
    trace::TraceFormat format = trace::TraceFormat::encounters;
    trace::SyntheticTraceConfig synthetic;
    trace::Scenario scenario = trace::Scenario::fast_predator;
    trace::SeedPlanOptions seeds;
    double opportunity_interval = 0.0;
};

struct SweepConfig {
    ModelParams params;
    ModelKind model = ModelKind::characteristic;
    SweepAxis axis = SweepAxis::Y;
    std::vector<double> values;
    std::optional<SweepAxis> inner_axis;  // set for two-axis grids (c x i)
    std::vector<double> inner_values;
    std::size_t rounds = 1000;
    std::uint64_t master_seed = 1;
    Aggregation aggregation = Aggregation::both;
    Mode mode = Mode::compare;
    double horizon = 0.0;  // 0: 100x the closed-form TA
    double arrival_delay = 0.0;
    int threads = 1;
    TraceSource trace;
    std::map<std::string, double> thresholds;  // metric -> max relative error
};

// Largest admissible Y: I_B(0) = Y * I_A(0) must leave at least one
// prey-susceptible node.
int y_max(const ModelParams& params);

// Distinct integers of a geometric grid from 1 to y_max.
std::vector<double> log_spaced_y(const ModelParams& params, std::size_t points);

// Reads the JSON schema documented in the README. Missing keys keep their
// defaults. Throws std::invalid_argument on bad values.
SweepConfig parse_sweep_config(const nlohmann::json& j);
nlohmann::json to_json(const SweepConfig& config);

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
// it parses, and kept as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// Parameters of one sweep point.
ModelParams params_at(const SweepConfig& config, double x, std::optional<double> inner);

// Round horizon when the config leaves it at 0: 100x the closed-form TA.
double default_horizon(const ModelParams& params);

struct SweepPoint {
    double x = 0.0;
    std::optional<double> inner;
    ModelParams params;
    std::optional<MetricSet> model;      // ODE metrics
    std::optional<RoundAggregate> sim;   // Monte Carlo aggregate
    std::vector<MetricSet> rounds;       // per-round metrics, in round order
    std::vector<std::string> round_errors;
    std::string error;                   // point-level failure
};

struct SweepReport {
    SweepConfig config;
    std::vector<SweepPoint> points;
};

// Evaluates every point. A failing point records its error and the sweep
// continues. Every point uses master_seed, so round k sees the same random
// streams at every point.
SweepReport run_sweep(const SweepConfig& config);

nlohmann::json to_json(const SweepReport& report);
SweepReport report_from_json(const nlohmann::json& j);

// Writes manifest.json, report.json, sweep.csv and per-point rounds/aggregate
// files into out_dir. Only the manifest carries a timestamp.
void write_report(const SweepReport& report, const std::filesystem::path& out_dir);

// Names accepted by metric lookups: ti mi tl al ta tr ti_rel mi_rel.
std::optional<double> metric_value(const MetricSet& m, std::string_view name);
const Summary& metric_summary(const RoundAggregate& agg, std::string_view name);

enum class Figure { fig2, fig3, fig4, fig6, fig7 };
Figure parse_figure(std::string_view text);

// Writes the figure's CSV panels into out_dir and returns their paths. Each
// panel has columns x,<metric>...[,<metric>_model...]; model columns appear
// when the report holds both simulation and ODE results. Throws
// std::invalid_argument naming the missing column when the report cannot
// supply one.
std::vector<std::filesystem::path> emit_plot_data(const SweepReport& report, Figure figure,
                                                  const std::filesystem::path& out_dir);

struct MetricError {
    std::string metric;
    double x = 0.0;
    std::optional<double> inner;
    std::optional<double> relative_error;  // empty when either side is censored
};

struct ValidationSummary {
    std::vector<MetricError> errors;
    std::map<std::string, double> max_error;
    std::map<std::string, double> mean_error;
    std::vector<std::string> breaches;  // metrics above their threshold

    bool passed() const { return breaches.empty(); }
};

// |sim - model| / |model| per point and metric, using the configured
// central value. Requires a report with both sides.
ValidationSummary validate_model(const SweepReport& report, const std::map<std::string, double>& thresholds);

// Element-wise comparison of two metric sets, used for self-checks.
ValidationSummary compare_metric_sets(const MetricSet& reference, const MetricSet& candidate);

nlohmann::json to_json(const ValidationSummary& summary);

}  // namespace wormsim::experiment

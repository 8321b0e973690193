// Command-line front end: ODE runs, Monte Carlo batches, trace analysis,
// sweeps and plot-data emission.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wormsim/core_model.hpp"
#include "wormsim/experiment.hpp"
#include "wormsim/metrics.hpp"
#include "wormsim/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wormsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitBreach = 2;

struct GlobalOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::optional<std::size_t> rounds;
    std::optional<int> threads;
};

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(std::numeric_limits<double>::max_digits10);
    return out;
}

// Config file, then --set overrides, then the dedicated global flags.
experiment::SweepConfig load_config(const GlobalOptions& g) {
    json doc = g.config_path.empty() ? json::object() : read_json(g.config_path);
    for (const auto& o : g.overrides) experiment::apply_override(doc, o);
    if (g.seed) doc["master_seed"] = *g.seed;
    if (g.rounds) doc["rounds"] = *g.rounds;
    if (g.threads) doc["threads"] = *g.threads;
    return experiment::parse_sweep_config(doc);
}

// Collapses a config to its baseline point.
experiment::SweepConfig single_point(experiment::SweepConfig c, experiment::Mode mode) {
    c.mode = mode;
    c.axis = experiment::SweepAxis::p;
    c.values = {c.params.on_prob};
    c.inner_axis.reset();
    c.inner_values.clear();
    return c;
}

void print_point(const experiment::SweepPoint& p) {
    json j;
    if (p.model) j["model"] = to_json(*p.model);
    if (p.sim) j["sim"] = to_json(*p.sim);
    if (!p.round_errors.empty()) j["round_errors"] = p.round_errors.size();
    if (!p.error.empty()) j["error"] = p.error;
    std::cout << j.dump(2) << '\n';
}

int finish_report(const experiment::SweepReport& report, const fs::path& out_dir) {
    experiment::write_report(report, out_dir);
    int failed = 0;
    for (const auto& p : report.points) {
        if (!p.error.empty()) {
            std::cerr << "point x=" << p.x << " failed: " << p.error << '\n';
            ++failed;
        }
    }
    std::cerr << "wrote " << report.points.size() << " point(s) to " << out_dir.string() << '\n';
    return failed == static_cast<int>(report.points.size()) ? kExitError : kExitOk;
}

int gate(const experiment::SweepReport& report, const fs::path& out_dir) {
    const auto summary = experiment::validate_model(report, report.config.thresholds);
    open_out(out_dir / "validation.json") << to_json(summary).dump(2) << '\n';
    for (const auto& [metric, err] : summary.max_error) {
        std::cout << metric << " max_rel_error=" << err << " mean_rel_error=" << summary.mean_error.at(metric);
        const auto t = report.config.thresholds.find(metric);
        if (t != report.config.thresholds.end()) std::cout << " threshold=" << t->second;
        std::cout << '\n';
    }
    if (!summary.passed()) {
        std::cerr << "threshold breached:";
        for (const auto& m : summary.breaches) std::cerr << ' ' << m;
        std::cerr << '\n';
        return kExitBreach;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Predator/prey worm propagation in encounter-based networks"};
    app.fallthrough();
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app.add_option("--set", g.overrides, "Override a config key, e.g. --set params.beta=3e-5");
    app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
    app.add_option("--rounds", g.rounds, "Rounds per point")->check(CLI::PositiveNumber);
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

    auto* ode = app.add_subcommand("ode", "Integrate the ODE model and report its metrics");
    std::string model_name;
    double step = 0.0;
    double horizon = 0.0;
    ode->add_option("--model", model_name, "basic or characteristic (default: from config)");
    ode->add_option("--step", step, "RK4 step in seconds (default: beta*N*h = 0.005)");
    ode->add_option("--horizon", horizon, "Fixed horizon in seconds (default: run until settled)");

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo rounds under uniform mixing");

    auto* stats = app.add_subcommand("trace-stats", "Parse a contact trace and report its statistics");
    std::string trace_path;
    std::string trace_format = "associations";
    std::size_t bins = 50;
    bool write_derived = false;
    stats->add_option("--trace", trace_path, "Trace CSV")->required()->check(CLI::ExistingFile);
    stats->add_option("--format", trace_format, "associations or encounters")->capture_default_str();
    stats->add_option("--bins", bins, "Histogram bins")->capture_default_str();
    stats->add_flag("--derived", write_derived, "Also write the derived encounter list");

    auto* replay = app.add_subcommand("trace-replay", "Replay worm rounds over a trace");
    std::string replay_trace;
    std::string replay_format;
    std::string scenario;
    replay->add_option("--trace", replay_trace, "Trace CSV (default: config, else synthetic)");
    replay->add_option("--format", replay_format, "associations or encounters");
    replay->add_option("--scenario", scenario, "fast_predator or slow_predator");

    auto* sweep = app.add_subcommand("sweep", "Run the configured parameter sweep");

    auto* validate = app.add_subcommand("validate", "Compare ODE and simulation; exit 2 on a threshold breach");
    std::string validate_report;
    validate->add_option("--report", validate_report, "Existing report.json (default: run the sweep)")
        ->check(CLI::ExistingFile);

    auto* plots = app.add_subcommand("emit-plots", "Write figure CSVs from a sweep report");
    std::string plots_report;
    std::vector<std::string> figures;
    plots->add_option("--report", plots_report, "report.json from a sweep")->required()->check(CLI::ExistingFile);
    plots->add_option("--figure", figures, "fig2 fig3 fig4 fig6 fig7")->required();

    auto* gen = app.add_subcommand("gen-trace", "Write a synthetic heavy-tailed encounter trace");
    std::string gen_output;
    gen->add_option("--output", gen_output, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitError;
    }

    const fs::path out_dir = g.out_dir;
    try {
        if (*ode) {
            auto config = load_config(g);
            const ModelKind kind = model_name.empty() ? config.model : parse_model_kind(model_name);
            wormsim::validate(config.params);
            const Trajectory traj = horizon > 0.0
                                        ? integrate(config.params, kind,
                                                    step > 0.0 ? step : default_step(config.params), horizon)
                                        : integrate_until_settled(config.params, kind, step);
            for (const auto& w : traj.warnings) std::cerr << "warning: " << w << '\n';
            const MetricSet m = model_metrics(traj);
            {
                auto out = open_out(out_dir / "trajectory.csv");
                write_trajectory_csv(out, traj);
            }
            json j = to_json(m);
            j["ti_rel"] = m.ti_relative;
            j["mi_rel"] = m.mi_relative;
            j["model"] = to_string(kind);
            j["step"] = traj.step;
            j["suppression_threshold"] = suppression_threshold(config.params, kind);
            if (config.params.contact_rate() > 0.0 && config.params.n_total >= 2) {
                j["ta_closed_form"] = ta_closed_form(config.params);
            }
            open_out(out_dir / "ode_metrics.json") << j.dump(2) << '\n';
            std::cout << j.dump(2) << '\n';
            return kExitOk;
        }
        if (*simulate) {
            const auto report = experiment::run_sweep(single_point(load_config(g), experiment::Mode::uniform_sim));
            print_point(report.points.front());
            return finish_report(report, out_dir);
        }
        if (*stats) {
            trace::ParseReport parse;
            const auto data = trace::load_trace(trace_path, trace::parse_trace_format(trace_format), parse);
            const auto s = trace::compute_stats(data.encounters, data.nodes.size(), data.duration, bins);
            json j = to_json(s);
            j["parse"] = {{"data_lines", parse.data_lines},
                          {"dropped_zero_duration", parse.dropped_zero_duration},
                          {"malformed", parse.malformed.size()},
                          {"anomalies", parse.anomalies.size()},
                          {"warnings", parse.warnings}};
            open_out(out_dir / "trace_stats.json") << j.dump(2) << '\n';
            {
                auto out = open_out(out_dir / "trace_histograms.csv");
                trace::write_histogram_csv(out, s);
            }
            if (write_derived) {
                {
                auto out = open_out(out_dir / "encounters.csv");
                trace::write_encounter_csv(out, data.encounters, &data.nodes);
            }
            }
            for (const auto& w : parse.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << "nodes=" << s.n_nodes << " encounters=" << s.total_encounters
                      << " top20_share=" << s.top20_share << " below20_unique=" << s.below20_unique_fraction
                      << '\n';
            return kExitOk;
        }
        if (*replay) {
            auto config = single_point(load_config(g), experiment::Mode::trace_replay);
            if (!replay_trace.empty()) config.trace.path = replay_trace;
            if (!replay_format.empty()) config.trace.format = trace::parse_trace_format(replay_format);
            if (!scenario.empty()) config.trace.scenario = trace::parse_scenario(scenario);
            const auto report = experiment::run_sweep(config);
            print_point(report.points.front());
            return finish_report(report, out_dir);
        }
        if (*sweep) {
            const auto report = experiment::run_sweep(load_config(g));
            const int status = finish_report(report, out_dir);
            if (status == kExitOk && report.config.mode == experiment::Mode::compare &&
                !report.config.thresholds.empty()) {
                return gate(report, out_dir);
            }
            return status;
        }
        if (*validate) {
            experiment::SweepReport report;
            if (validate_report.empty()) {
                auto config = load_config(g);
                config.mode = experiment::Mode::compare;
                report = experiment::run_sweep(config);
                experiment::write_report(report, out_dir);
            } else {
                report = experiment::report_from_json(read_json(validate_report));
                // thresholds from --config/--set take precedence over the stored ones
                if (!g.config_path.empty() || !g.overrides.empty()) {
                    report.config.thresholds = load_config(g).thresholds;
                }
            }
            return gate(report, out_dir);
        }
        if (*plots) {
            const auto report = experiment::report_from_json(read_json(plots_report));
            for (const auto& name : figures) {
                for (const auto& path : experiment::emit_plot_data(report, experiment::parse_figure(name), out_dir)) {
                    std::cout << path.string() << '\n';
                }
            }
            return kExitOk;
        }
        if (*gen) {
            auto config = load_config(g);
            if (g.seed) config.trace.synthetic.seed = *g.seed;
            const auto t = trace::generate_synthetic_trace(config.trace.synthetic);
            {
                auto out = open_out(gen_output);
                trace::write_encounter_csv(out, t.encounters);
            }
            std::cerr << "wrote " << t.encounters.size() << " encounters to " << gen_output << '\n';
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}

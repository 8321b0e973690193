#include "wormsim/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace wormsim::experiment {

namespace {

constexpr std::string_view kVersion = "0.1.0";
constexpr const char* kMetricNames[] = {"ti", "mi", "tl", "al", "ta", "tr", "ti_rel", "mi_rel"};

}  // namespace

std::string_view to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Y: return "y";
        case SweepAxis::c: return "c";
        case SweepAxis::i: return "i";
        case SweepAxis::p: return "p";
    }
    return "?";
}

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::ode: return "ode";
        case Mode::uniform_sim: return "uniform_sim";
        case Mode::trace_replay: return "trace_replay";
        case Mode::compare: return "compare";
    }
    return "?";
}

std::string_view to_string(Aggregation agg) {
    switch (agg) {
        case Aggregation::mean: return "mean";
        case Aggregation::median: return "median";
        case Aggregation::both: return "both";
    }
    return "?";
}

SweepAxis parse_axis(std::string_view text) {
    if (text == "Y" || text == "y") return SweepAxis::Y;
    if (text == "c") return SweepAxis::c;
    if (text == "i") return SweepAxis::i;
    if (text == "p") return SweepAxis::p;
    throw std::invalid_argument("unknown sweep axis '" + std::string(text) + "'");
}

Mode parse_mode(std::string_view text) {
    if (text == "ode") return Mode::ode;
    if (text == "uniform_sim") return Mode::uniform_sim;
    if (text == "trace_replay") return Mode::trace_replay;
    if (text == "compare") return Mode::compare;
    throw std::invalid_argument("unknown mode '" + std::string(text) + "'");
}

Aggregation parse_aggregation(std::string_view text) {
    if (text == "mean") return Aggregation::mean;
    if (text == "median") return Aggregation::median;
    if (text == "both") return Aggregation::both;
    throw std::invalid_argument("unknown aggregation '" + std::string(text) + "'");
}

int y_max(const ModelParams& params) {
    if (params.i_a0 < 1) throw std::invalid_argument("a Y sweep needs i_a0 >= 1");
    const int pool = cooperative_count(params) - immune_count(params);
    return std::max(0, (pool - params.i_a0 - 1) / params.i_a0);
}

std::vector<double> log_spaced_y(const ModelParams& params, std::size_t points) {
    const int top = y_max(params);
    if (top < 1) throw std::invalid_argument("no admissible Y for these parameters");
    std::set<int> grid{1, top};
    if (points > 1) {
        for (std::size_t k = 0; k < points; ++k) {
            const double frac = static_cast<double>(k) / static_cast<double>(points - 1);
            grid.insert(static_cast<int>(std::lround(std::pow(static_cast<double>(top), frac))));
        }
    }
    return {grid.begin(), grid.end()};
}

namespace {

double axis_value(const ModelParams& p, SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Y: return p.i_a0 > 0 ? static_cast<double>(p.i_b0) / p.i_a0 : 0.0;
        case SweepAxis::c: return p.coop_frac;
        case SweepAxis::i: return p.immune_frac;
        case SweepAxis::p: return p.on_prob;
    }
    return 0.0;
}

void set_axis(ModelParams& p, SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::Y: p.i_b0 = static_cast<int>(std::lround(value)) * p.i_a0; break;
        case SweepAxis::c: p.coop_frac = value; break;
        case SweepAxis::i: p.immune_frac = value; break;
        case SweepAxis::p: p.on_prob = value; break;
    }
}

void check_axis_values(const ModelParams& base, SweepAxis axis, const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("sweep has no values");
    for (double v : values) {
        if (axis == SweepAxis::Y) {
            if (v != std::round(v) || v < 1.0 || v > y_max(base)) {
                throw std::invalid_argument("Y = " + std::to_string(v) + " outside [1, " + std::to_string(y_max(base)) +
                                            "]");
            }
        } else if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument(std::string(to_string(axis)) + " = " + std::to_string(v) +
                                        " outside [0, 1]");
        }
    }
}

nlohmann::json params_json(const ModelParams& p) {
    return {{"beta", p.beta},           {"n_total", p.n_total}, {"coop_frac", p.coop_frac},
            {"immune_frac", p.immune_frac}, {"on_prob", p.on_prob}, {"i_a0", p.i_a0},
            {"i_b0", p.i_b0}};
}

ModelParams params_from_json(const nlohmann::json& j, ModelParams p = {}) {
    static const std::set<std::string> known = {"beta", "n_total", "coop_frac", "immune_frac",
                                                "on_prob", "i_a0", "i_b0"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw std::invalid_argument("unknown params key '" + key + "'");
    }
    p.beta = j.value("beta", p.beta);
    p.n_total = j.value("n_total", p.n_total);
    p.coop_frac = j.value("coop_frac", p.coop_frac);
    p.immune_frac = j.value("immune_frac", p.immune_frac);
    p.on_prob = j.value("on_prob", p.on_prob);
    p.i_a0 = j.value("i_a0", p.i_a0);
    p.i_b0 = j.value("i_b0", p.i_b0);
    return p;
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw std::invalid_argument("unknown " + where + " key '" + key + "'");
    }
}

}  // namespace

SweepConfig parse_sweep_config(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("sweep config must be a JSON object");
    reject_unknown(j,
                   {"model", "params", "sweep", "rounds", "master_seed", "aggregation", "mode", "horizon",
                    "arrival_delay", "threads", "trace", "thresholds"},
                   "config");
    SweepConfig c;
    try {
        if (j.contains("params")) c.params = params_from_json(j.at("params"));
        c.model = parse_model_kind(j.value("model", std::string(to_string(c.model))));
        c.rounds = j.value("rounds", c.rounds);
        c.master_seed = j.value("master_seed", c.master_seed);
        c.aggregation = parse_aggregation(j.value("aggregation", std::string(to_string(c.aggregation))));
        c.mode = parse_mode(j.value("mode", std::string(to_string(c.mode))));
        c.horizon = j.value("horizon", c.horizon);
        c.arrival_delay = j.value("arrival_delay", c.arrival_delay);
        c.threads = j.value("threads", c.threads);
        if (j.contains("thresholds")) {
            for (const auto& [key, value] : j.at("thresholds").items()) {
                if (std::find(std::begin(kMetricNames), std::end(kMetricNames), key) == std::end(kMetricNames)) {
                    throw std::invalid_argument("unknown threshold metric '" + key + "'");
                }
                c.thresholds[key] = value.get<double>();
            }
        }

        if (j.contains("trace")) {
            const auto& t = j.at("trace");
            reject_unknown(t,
                           {"path", "format", "scenario", "group_frac", "arrival_delay", "high_quantile",
                            "low_quantile", "opportunity_interval", "synthetic"},
                           "trace");
            c.trace.path = t.value("path", std::string());
            c.trace.format = trace::parse_trace_format(t.value("format", std::string("encounters")));
            c.trace.scenario = trace::parse_scenario(t.value("scenario", std::string("fast_predator")));
            c.trace.seeds.group_frac = t.value("group_frac", c.trace.seeds.group_frac);
            c.trace.seeds.arrival_delay = t.value("arrival_delay", c.trace.seeds.arrival_delay);
            c.trace.seeds.high_quantile = t.value("high_quantile", c.trace.seeds.high_quantile);
            c.trace.seeds.low_quantile = t.value("low_quantile", c.trace.seeds.low_quantile);
            c.trace.opportunity_interval = t.value("opportunity_interval", 0.0);
            if (t.contains("synthetic")) {
                const auto& s = t.at("synthetic");
                reject_unknown(s, {"n_nodes", "duration", "mean_beta", "skew", "mean_contact", "seed"},
                               "trace.synthetic");
                auto& g = c.trace.synthetic;
                g.n_nodes = s.value("n_nodes", g.n_nodes);
                g.duration = s.value("duration", g.duration);
                g.mean_beta = s.value("mean_beta", g.mean_beta);
                g.skew = s.value("skew", g.skew);
                g.mean_contact = s.value("mean_contact", g.mean_contact);
                g.seed = s.value("seed", g.seed);
            }
        }

        if (j.contains("sweep")) {
            const auto& s = j.at("sweep");
            reject_unknown(s, {"axis", "values", "grid", "points", "inner_axis", "inner_values"}, "sweep");
            c.axis = parse_axis(s.value("axis", std::string("y")));
            if (s.contains("values")) {
                c.values = s.at("values").get<std::vector<double>>();
            } else {
                const std::string grid = s.value("grid", std::string("log"));
                if (c.axis != SweepAxis::Y) throw std::invalid_argument("grids are only generated for Y");
                if (grid == "log") {
                    c.values = log_spaced_y(c.params, s.value("points", std::size_t{12}));
                } else if (grid == "full") {
                    for (int y = 1; y <= y_max(c.params); ++y) c.values.push_back(y);
                } else {
                    throw std::invalid_argument("unknown grid '" + grid + "'");
                }
            }
            if (s.contains("inner_axis")) {
                c.inner_axis = parse_axis(s.at("inner_axis").get<std::string>());
                c.inner_values = s.value("inner_values", std::vector<double>{});
            }
        } else {
            c.values = {axis_value(c.params, c.axis)};
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad config value: ") + e.what());
    }

    if (c.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    check_axis_values(c.params, c.axis, c.values);
    if (c.inner_axis) {
        if (*c.inner_axis == c.axis) throw std::invalid_argument("inner axis must differ from the outer axis");
        check_axis_values(c.params, *c.inner_axis, c.inner_values);
    }
    if (c.mode == Mode::trace_replay && (c.axis == SweepAxis::Y || c.inner_axis == SweepAxis::Y)) {
        throw std::invalid_argument("trace replay seeds one prey and one predator; Y cannot be swept");
    }
    return c;
}

nlohmann::json to_json(const SweepConfig& c) {
    nlohmann::json sweep = {{"axis", to_string(c.axis)}, {"values", c.values}};
    if (c.inner_axis) {
        sweep["inner_axis"] = to_string(*c.inner_axis);
        sweep["inner_values"] = c.inner_values;
    }
    nlohmann::json trace = {{"path", c.trace.path},
                            {"format", c.trace.format == trace::TraceFormat::encounters ? "encounters" : "associations"},
                            {"scenario", trace::to_string(c.trace.scenario)},
                            {"group_frac", c.trace.seeds.group_frac},
                            {"arrival_delay", c.trace.seeds.arrival_delay},
                            {"high_quantile", c.trace.seeds.high_quantile},
                            {"low_quantile", c.trace.seeds.low_quantile},
                            {"opportunity_interval", c.trace.opportunity_interval},
                            {"synthetic",
                             {{"n_nodes", c.trace.synthetic.n_nodes},
                              {"duration", c.trace.synthetic.duration},
                              {"mean_beta", c.trace.synthetic.mean_beta},
                              {"skew", c.trace.synthetic.skew},
                              {"mean_contact", c.trace.synthetic.mean_contact},
                              {"seed", c.trace.synthetic.seed}}}};
    nlohmann::json thresholds = nlohmann::json::object();
    for (const auto& [k, v] : c.thresholds) thresholds[k] = v;
    return {{"model", to_string(c.model)},
            {"params", params_json(c.params)},
            {"sweep", sweep},
            {"rounds", c.rounds},
            {"master_seed", c.master_seed},
            {"aggregation", to_string(c.aggregation)},
            {"mode", to_string(c.mode)},
            {"horizon", c.horizon},
            {"arrival_delay", c.arrival_delay},
            {"threads", c.threads},
            {"trace", trace},
            {"thresholds", thresholds}};
}

void apply_override(nlohmann::json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw std::invalid_argument("override must look like key.path=value: '" + std::string(assignment) + "'");
    }
    const std::string_view path = assignment.substr(0, eq);
    const std::string value(assignment.substr(eq + 1));
    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key(path.substr(start, dot - start));
        if (key.empty()) throw std::invalid_argument("empty key in override '" + std::string(assignment) + "'");
        if (!node->is_object()) *node = nlohmann::json::object();
        node = &(*node)[key];
        if (dot == std::string_view::npos) break;
        start = dot + 1;
    }
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    *node = parsed.is_discarded() ? nlohmann::json(value) : parsed;
}

ModelParams params_at(const SweepConfig& config, double x, std::optional<double> inner) {
    ModelParams p = config.params;
    set_axis(p, config.axis, x);
    if (config.inner_axis && inner) set_axis(p, *config.inner_axis, *inner);
    return p;
}

double default_horizon(const ModelParams& p) {
    if (!(p.contact_rate() > 0.0) || p.n_total < 2) return 1.0;
    return 100.0 * ta_closed_form(p);
}

namespace {

struct LoadedTrace {
    trace::EncounterTrace data;
    trace::TraceStats stats;
    trace::SeedPlan plan;
};

LoadedTrace load_trace_source(const TraceSource& source) {
    LoadedTrace out;
    if (source.path.empty()) {
        auto synthetic = trace::generate_synthetic_trace(source.synthetic);
        out.data.encounters = std::move(synthetic.encounters);
        for (int k = 0; k < source.synthetic.n_nodes; ++k) out.data.nodes.intern(std::to_string(k));
        out.data.duration = synthetic.duration;
    } else {
        trace::ParseReport report;
        out.data = trace::load_trace(source.path, source.format, report);
    }
    out.stats = trace::compute_stats(out.data.encounters, out.data.nodes.size(), out.data.duration);
    out.plan = trace::select_seeds(out.stats, source.scenario, source.seeds);
    return out;
}

void fill_sim(SweepPoint& point, const std::vector<RoundOutcome>& outcomes) {
    for (const auto& o : outcomes) {
        if (o.metrics) {
            point.rounds.push_back(*o.metrics);
        } else {
            point.round_errors.push_back("round " + std::to_string(o.index) + ": " + o.error);
        }
    }
    if (point.rounds.empty()) throw std::runtime_error("every round failed");
    point.sim = aggregate(point.rounds);
}

}  // namespace

SweepReport run_sweep(const SweepConfig& config) {
    SweepReport report;
    report.config = config;

    std::optional<LoadedTrace> loaded;
    std::string trace_error;
    if (config.mode == Mode::trace_replay) {
        try {
            loaded = load_trace_source(config.trace);
        } catch (const std::exception& e) {
            trace_error = e.what();
        }
    }

    std::vector<std::optional<double>> inners;
    if (config.inner_axis) {
        inners.assign(config.inner_values.begin(), config.inner_values.end());
    } else {
        inners.push_back(std::nullopt);
    }

    for (double x : config.values) {
        for (const auto& inner : inners) {
            SweepPoint point;
            point.x = x;
            point.inner = inner;
            point.params = params_at(config, x, inner);
            try {
                validate(point.params);
                const bool want_model = config.mode == Mode::ode || config.mode == Mode::compare;
                const bool want_uniform = config.mode == Mode::uniform_sim || config.mode == Mode::compare;
                if (want_model) {
                    point.model = model_metrics(integrate_until_settled(point.params, config.model));
                }
                BatchOptions batch;
                batch.rounds = config.rounds;
                batch.master_seed = config.master_seed;
                batch.threads = config.threads;
                if (want_uniform) {
                    RoundConfig round;
                    round.params = point.params;
                    round.arrival_delay = config.arrival_delay;
                    round.horizon = config.horizon > 0.0 ? config.horizon : default_horizon(point.params);
                    fill_sim(point, run_rounds(round, batch));
                }
                if (config.mode == Mode::trace_replay) {
                    if (!loaded) throw std::runtime_error("trace unavailable: " + trace_error);
                    trace::ReplayOptions options;
                    options.coop_frac = point.params.coop_frac;
                    options.immune_frac = point.params.immune_frac;
                    options.on_prob = point.params.on_prob;
                    options.opportunity_interval = config.trace.opportunity_interval;
                    const trace::TraceReplayer replayer(loaded->data.encounters, loaded->data.nodes.size(),
                                                        loaded->data.duration, options);
                    fill_sim(point, trace::replay_rounds(replayer, loaded->plan, batch));
                }
            } catch (const std::exception& e) {
                point.error = e.what();
            }
            report.points.push_back(std::move(point));
        }
    }
    return report;
}

namespace {

nlohmann::json finite_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double number_or_nan(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

nlohmann::json metric_set_full(const MetricSet& m) {
    nlohmann::json j = to_json(m);
    j["ti_rel"] = m.ti_relative;
    j["mi_rel"] = m.mi_relative;
    j["tl_censored"] = m.tl_censored;
    j["al_undefined"] = m.al_undefined;
    return j;
}

MetricSet metric_set_from_json(const nlohmann::json& j) {
    MetricSet m;
    m.ti = j.at("ti").get<double>();
    m.mi = j.at("mi").get<double>();
    m.tl = j.at("tl").get<double>();
    m.al = j.at("al").get<double>();
    if (!j.at("ta").is_null()) m.ta = j.at("ta").get<double>();
    if (!j.at("tr").is_null()) m.tr = j.at("tr").get<double>();
    m.ti_relative = j.value("ti_rel", 0.0);
    m.mi_relative = j.value("mi_rel", 0.0);
    m.tl_censored = j.value("tl_censored", false);
    m.al_undefined = j.value("al_undefined", false);
    return m;
}

Summary summary_from_json(const nlohmann::json& j) {
    Summary s;
    s.mean = number_or_nan(j.at("mean"));
    s.median = number_or_nan(j.at("median"));
    s.stddev = number_or_nan(j.at("stddev"));
    s.count = j.at("count").get<std::size_t>();
    s.censored = j.at("censored").get<std::size_t>();
    return s;
}

RoundAggregate aggregate_from_json(const nlohmann::json& j) {
    RoundAggregate a;
    a.rounds = j.at("rounds").get<std::size_t>();
    a.ti = summary_from_json(j.at("ti"));
    a.mi = summary_from_json(j.at("mi"));
    a.tl = summary_from_json(j.at("tl"));
    a.al = summary_from_json(j.at("al"));
    a.ta = summary_from_json(j.at("ta"));
    a.tr = summary_from_json(j.at("tr"));
    a.ti_relative = summary_from_json(j.at("ti_rel"));
    a.mi_relative = summary_from_json(j.at("mi_rel"));
    return a;
}

}  // namespace

nlohmann::json to_json(const SweepReport& report) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : report.points) {
        points.push_back({{"x", p.x},
                          {"inner", p.inner ? nlohmann::json(*p.inner) : nlohmann::json(nullptr)},
                          {"params", params_json(p.params)},
                          {"model", p.model ? metric_set_full(*p.model) : nlohmann::json(nullptr)},
                          {"sim", p.sim ? to_json(*p.sim) : nlohmann::json(nullptr)},
                          {"round_errors", p.round_errors},
                          {"error", p.error}});
    }
    return {{"version", kVersion}, {"config", to_json(report.config)}, {"points", points}};
}

SweepReport report_from_json(const nlohmann::json& j) {
    SweepReport report;
    report.config = parse_sweep_config(j.at("config"));
    for (const auto& p : j.at("points")) {
        SweepPoint point;
        point.x = p.at("x").get<double>();
        if (!p.at("inner").is_null()) point.inner = p.at("inner").get<double>();
        point.params = params_from_json(p.at("params"));
        if (!p.at("model").is_null()) point.model = metric_set_from_json(p.at("model"));
        if (!p.at("sim").is_null()) point.sim = aggregate_from_json(p.at("sim"));
        point.round_errors = p.value("round_errors", std::vector<std::string>{});
        point.error = p.value("error", std::string());
        report.points.push_back(std::move(point));
    }
    return report;
}

std::optional<double> metric_value(const MetricSet& m, std::string_view name) {
    if (name == "ti") return m.ti;
    if (name == "mi") return m.mi;
    if (name == "tl") return m.tl;
    if (name == "al") return m.al;
    if (name == "ta") return m.ta;
    if (name == "tr") return m.tr;
    if (name == "ti_rel") return m.ti_relative;
    if (name == "mi_rel") return m.mi_relative;
    throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

const Summary& metric_summary(const RoundAggregate& agg, std::string_view name) {
    if (name == "ti") return agg.ti;
    if (name == "mi") return agg.mi;
    if (name == "tl") return agg.tl;
    if (name == "al") return agg.al;
    if (name == "ta") return agg.ta;
    if (name == "tr") return agg.tr;
    if (name == "ti_rel") return agg.ti_relative;
    if (name == "mi_rel") return agg.mi_relative;
    throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

namespace {

std::string iso_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    std::ostringstream out;
    out << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(std::numeric_limits<double>::max_digits10);
    return out;
}

void write_number(std::ostream& out, double v) {
    if (std::isnan(v)) {
        out << "nan";
    } else {
        out << v;
    }
}

double central(const Summary& s, Aggregation agg) {
    return agg == Aggregation::median ? s.median : s.mean;
}

}  // namespace

void write_report(const SweepReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const nlohmann::json config = to_json(report.config);
    {
        nlohmann::json seeds = nlohmann::json::array();
        for (std::size_t k = 0; k < report.points.size(); ++k) {
            seeds.push_back({{"point", k}, {"master_seed", report.config.master_seed}});
        }
        const nlohmann::json manifest = {{"tool", "wormsim"},
                                         {"version", kVersion},
                                         {"generated_at", iso_timestamp()},
                                         {"config", config},
                                         {"seeds", seeds},
                                         {"round_seed_rule", "splitmix64(master_seed, round_index)"}};
        open_for_write(out_dir / "manifest.json") << manifest.dump(2) << '\n';
    }
    open_for_write(out_dir / "report.json") << to_json(report).dump(2) << '\n';

    const Aggregation agg = report.config.aggregation;
    auto sweep = open_for_write(out_dir / "sweep.csv");
    sweep << to_string(report.config.axis);
    if (report.config.inner_axis) sweep << ',' << to_string(*report.config.inner_axis);
    sweep << ",rounds,round_errors,error";
    for (const char* m : kMetricNames) {
        if (agg != Aggregation::median) sweep << ',' << m << "_mean";
        if (agg != Aggregation::mean) sweep << ',' << m << "_median";
        sweep << ',' << m << "_sd," << m << "_censored," << m << "_model";
    }
    sweep << '\n';
    for (std::size_t k = 0; k < report.points.size(); ++k) {
        const SweepPoint& p = report.points[k];
        sweep << p.x;
        if (report.config.inner_axis) sweep << ',' << p.inner.value_or(std::nan(""));
        sweep << ',' << (p.sim ? p.sim->rounds : 0) << ',' << p.round_errors.size() << ','
              << (p.error.empty() ? "" : "failed");
        for (const char* m : kMetricNames) {
            if (p.sim) {
                const Summary& s = metric_summary(*p.sim, m);
                if (agg != Aggregation::median) { sweep << ','; write_number(sweep, s.mean); }
                if (agg != Aggregation::mean) { sweep << ','; write_number(sweep, s.median); }
                sweep << ',';
                write_number(sweep, s.stddev);
                sweep << ',' << s.censored;
            } else {
                sweep << (agg == Aggregation::both ? ",,,," : ",,,");
            }
            sweep << ',';
            if (p.model) {
                if (const auto v = metric_value(*p.model, m)) write_number(sweep, *v);
            }
        }
        sweep << '\n';

        if (p.sim) {
            auto rounds = open_for_write(out_dir / ("rounds_" + std::to_string(k) + ".csv"));
            write_round_csv_header(rounds);
            for (std::size_t r = 0; r < p.rounds.size(); ++r) write_round_csv_row(rounds, r, p.rounds[r]);
            nlohmann::json point_agg = to_json(*p.sim);
            point_agg["x"] = p.x;
            if (p.inner) point_agg["inner"] = *p.inner;
            open_for_write(out_dir / ("aggregate_" + std::to_string(k) + ".json")) << point_agg.dump(2) << '\n';
        }
    }
    (void)central;
}

Figure parse_figure(std::string_view text) {
    if (text == "fig2") return Figure::fig2;
    if (text == "fig3") return Figure::fig3;
    if (text == "fig4") return Figure::fig4;
    if (text == "fig6") return Figure::fig6;
    if (text == "fig7") return Figure::fig7;
    throw std::invalid_argument("unknown figure '" + std::string(text) + "'");
}

namespace {

struct PanelValue {
    double value;
    std::optional<double> model;
};

// Main value from the simulation when present, else from the ODE.
PanelValue panel_value(const SweepPoint& p, const std::string& metric, Aggregation agg, bool with_model) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    PanelValue v{nan, std::nullopt};
    if (p.sim) {
        v.value = central(metric_summary(*p.sim, metric), agg);
    } else if (p.model) {
        v.value = metric_value(*p.model, metric).value_or(nan);
    } else {
        throw std::invalid_argument("report is missing column '" + metric + "'");
    }
    if (with_model) {
        if (!p.model) throw std::invalid_argument("report is missing column '" + metric + "_model'");
        v.model = metric_value(*p.model, metric).value_or(nan);
    }
    return v;
}

std::vector<const SweepPoint*> usable_points(const SweepReport& report) {
    std::vector<const SweepPoint*> out;
    for (const auto& p : report.points) {
        if (p.error.empty()) out.push_back(&p);
    }
    if (out.empty()) throw std::invalid_argument("report has no successful points");
    return out;
}

bool has_model_columns(const std::vector<const SweepPoint*>& points) {
    return std::all_of(points.begin(), points.end(), [](const SweepPoint* p) { return p->sim && p->model; });
}

std::filesystem::path write_panel(const SweepReport& report, const std::filesystem::path& path,
                                  const std::vector<std::string>& metrics) {
    const auto points = usable_points(report);
    const bool with_model = has_model_columns(points);
    auto out = open_for_write(path);
    out << to_string(report.config.axis);
    for (const auto& m : metrics) out << ',' << m;
    if (with_model) {
        for (const auto& m : metrics) out << ',' << m << "_model";
    }
    out << '\n';
    for (const SweepPoint* p : points) {
        std::vector<PanelValue> values;
        for (const auto& m : metrics) values.push_back(panel_value(*p, m, report.config.aggregation, with_model));
        out << p->x;
        for (const auto& v : values) { out << ','; write_number(out, v.value); }
        if (with_model) {
            for (const auto& v : values) { out << ','; write_number(out, *v.model); }
        }
        out << '\n';
    }
    return path;
}

// Matrix panel: outer axis as rows, inner axis as columns.
std::filesystem::path write_grid(const SweepReport& report, const std::filesystem::path& path,
                                 const std::string& metric, bool model_side) {
    const auto& cfg = report.config;
    auto out = open_for_write(path);
    out << to_string(cfg.axis);
    for (double v : cfg.inner_values) out << ',' << to_string(*cfg.inner_axis) << '=' << v;
    out << '\n';
    for (double x : cfg.values) {
        out << x;
        for (double inner : cfg.inner_values) {
            out << ',';
            const auto it = std::find_if(report.points.begin(), report.points.end(), [&](const SweepPoint& p) {
                return p.x == x && p.inner && *p.inner == inner;
            });
            if (it == report.points.end() || !it->error.empty()) {
                out << "nan";
                continue;
            }
            if (model_side) {
                if (!it->model) throw std::invalid_argument("report is missing column '" + metric + "_model'");
                write_number(out, metric_value(*it->model, metric).value_or(std::nan("")));
            } else {
                write_number(out, panel_value(*it, metric, cfg.aggregation, false).value);
            }
        }
        out << '\n';
    }
    return path;
}

void require_axis(const SweepReport& report, std::initializer_list<SweepAxis> allowed, const char* figure) {
    if (report.config.inner_axis && std::string_view(figure) != "fig6") {
        throw std::invalid_argument(std::string(figure) + " needs a single-axis sweep");
    }
    if (std::find(allowed.begin(), allowed.end(), report.config.axis) == allowed.end()) {
        throw std::invalid_argument(std::string(figure) + " cannot be drawn from a sweep over " +
                                    std::string(to_string(report.config.axis)));
    }
}

}  // namespace

std::vector<std::filesystem::path> emit_plot_data(const SweepReport& report, Figure figure,
                                                  const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> files;
    switch (figure) {
        case Figure::fig2:
            require_axis(report, {SweepAxis::Y}, "fig2");
            files.push_back(write_panel(report, out_dir / "fig2.csv", {"ti_rel", "mi_rel"}));
            break;
        case Figure::fig3:
            require_axis(report, {SweepAxis::Y}, "fig3");
            files.push_back(write_panel(report, out_dir / "fig3.csv", {"tl", "al"}));
            break;
        case Figure::fig4:
            require_axis(report, {SweepAxis::Y}, "fig4");
            files.push_back(write_panel(report, out_dir / "fig4.csv", {"ta", "tr"}));
            break;
        case Figure::fig6: {
            require_axis(report, {SweepAxis::c, SweepAxis::i, SweepAxis::p}, "fig6");
            const std::vector<std::string> metrics = {"ti_rel", "mi_rel", "tl", "al", "ta", "tr"};
            if (report.config.inner_axis) {
                const bool with_model = has_model_columns(usable_points(report));
                for (const auto& m : metrics) {
                    files.push_back(write_grid(report, out_dir / ("fig6_" + m + ".csv"), m, false));
                    if (with_model) {
                        files.push_back(write_grid(report, out_dir / ("fig6_" + m + "_model.csv"), m, true));
                    }
                }
            } else {
                const std::string name = "fig6_" + std::string(to_string(report.config.axis)) + ".csv";
                files.push_back(write_panel(report, out_dir / name, metrics));
            }
            break;
        }
        case Figure::fig7:
            require_axis(report, {SweepAxis::c, SweepAxis::i, SweepAxis::p}, "fig7");
            files.push_back(write_panel(report, out_dir / "fig7_infectives.csv", {"ti_rel", "mi_rel"}));
            files.push_back(write_panel(report, out_dir / "fig7_lifespan.csv", {"tl", "al"}));
            files.push_back(write_panel(report, out_dir / "fig7_removal.csv", {"tr"}));
            break;
    }
    return files;
}

namespace {

std::optional<double> relative_error(std::optional<double> reference, double candidate) {
    if (!reference || !std::isfinite(*reference) || !std::isfinite(candidate)) return std::nullopt;
    if (*reference == 0.0) return candidate == 0.0 ? std::optional<double>(0.0) : std::nullopt;
    return std::abs(candidate - *reference) / std::abs(*reference);
}

void summarize_errors(ValidationSummary& summary, const std::map<std::string, double>& thresholds) {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& e : summary.errors) {
        if (!e.relative_error) continue;
        auto& [sum, n] = sums[e.metric];
        sum += *e.relative_error;
        ++n;
        summary.max_error[e.metric] = std::max(summary.max_error[e.metric], *e.relative_error);
    }
    for (const auto& [metric, acc] : sums) summary.mean_error[metric] = acc.first / static_cast<double>(acc.second);
    for (const auto& [metric, limit] : thresholds) {
        const auto it = summary.max_error.find(metric);
        if (it != summary.max_error.end() && it->second > limit) summary.breaches.push_back(metric);
    }
}

}  // namespace

ValidationSummary validate_model(const SweepReport& report, const std::map<std::string, double>& thresholds) {
    ValidationSummary summary;
    bool any = false;
    for (const auto& p : report.points) {
        if (!p.error.empty() || !p.sim || !p.model) continue;
        any = true;
        for (const char* m : kMetricNames) {
            const Summary& s = metric_summary(*p.sim, m);
            const double sim = s.count > 0 ? central(s, report.config.aggregation)
                                           : std::numeric_limits<double>::quiet_NaN();
            summary.errors.push_back({m, p.x, p.inner, relative_error(metric_value(*p.model, m), sim)});
        }
    }
    if (!any) throw std::invalid_argument("validation needs a compare-mode report with model and simulation results");
    summarize_errors(summary, thresholds);
    return summary;
}

ValidationSummary compare_metric_sets(const MetricSet& reference, const MetricSet& candidate) {
    ValidationSummary summary;
    for (const char* m : kMetricNames) {
        const auto c = metric_value(candidate, m);
        summary.errors.push_back(
            {m, 0.0, std::nullopt, relative_error(metric_value(reference, m), c.value_or(std::nan("")))});
    }
    summarize_errors(summary, {});
    return summary;
}

nlohmann::json to_json(const ValidationSummary& summary) {
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& e : summary.errors) {
        errors.push_back({{"metric", e.metric},
                          {"x", e.x},
                          {"inner", e.inner ? nlohmann::json(*e.inner) : nlohmann::json(nullptr)},
                          {"relative_error", e.relative_error ? finite_or_null(*e.relative_error)
                                                               : nlohmann::json(nullptr)}});
    }
    return {{"passed", summary.passed()},
            {"breaches", summary.breaches},
            {"max_error", summary.max_error},
            {"mean_error", summary.mean_error},
            {"errors", errors}};
}

}  // namespace wormsim::experiment

#include "wormsim/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "wormsim/metrics.hpp"
#include "wormsim/parallel.hpp"

namespace wormsim::trace {

int NameTable::intern(std::string_view name) {
    const auto it = ids_.find(std::string(name));
    if (it != ids_.end()) return it->second;
    const int id = size();
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
}

int NameTable::find(std::string_view name) const {
    const auto it = ids_.find(std::string(name));
    return it == ids_.end() ? -1 : it->second;
}

TraceFormat parse_trace_format(std::string_view text) {
    if (text == "associations") return TraceFormat::associations;
    if (text == "encounters") return TraceFormat::encounters;
    throw std::invalid_argument("unknown trace format '" + std::string(text) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

bool parse_number(std::string_view text, double& out) {
    if (text.empty()) return false;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

struct Row {
    std::size_t line;
    std::string_view a, b;
    double t_start, t_end;
};

// Shared line handling for both four-column schemas. Calls accept(row) for
// each well-formed row with positive length.
template <class Accept>
void read_rows(std::istream& in, std::string_view header, ParseReport& report, double max_malformed_frac,
               Accept&& accept) {
    std::string line;
    std::size_t line_no = 0;
    bool seen_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        if (!seen_header) {
            if (view != header) {
                throw std::runtime_error("line " + std::to_string(line_no) + ": expected header '" +
                                         std::string(header) + "'");
            }
            seen_header = true;
            continue;
        }
        ++report.data_lines;
        const auto fields = split_fields(view);
        Row row{line_no, {}, {}, 0.0, 0.0};
        if (fields.size() != 4) {
            report.malformed.push_back({line_no, "expected 4 fields, got " + std::to_string(fields.size())});
            continue;
        }
        row.a = fields[0];
        row.b = fields[1];
        if (row.a.empty() || row.b.empty()) {
            report.malformed.push_back({line_no, "empty identifier"});
            continue;
        }
        if (!parse_number(fields[2], row.t_start) || !parse_number(fields[3], row.t_end)) {
            report.malformed.push_back({line_no, "non-numeric timestamp"});
            continue;
        }
        if (row.t_end < row.t_start) {
            report.malformed.push_back({line_no, "t_end precedes t_start"});
            continue;
        }
        if (row.t_end == row.t_start) {
            ++report.dropped_zero_duration;
            continue;
        }
        accept(row);
    }
    if (report.data_lines == 0) report.warnings.push_back("trace contains no records");
    if (static_cast<double>(report.malformed.size()) > max_malformed_frac * static_cast<double>(report.data_lines)) {
        throw std::runtime_error("too many malformed lines: " + std::to_string(report.malformed.size()) + " of " +
                                 std::to_string(report.data_lines) + " (first at line " +
                                 std::to_string(report.malformed.front().line) + ": " +
                                 report.malformed.front().message + ")");
    }
}

}  // namespace

AssociationTrace parse_associations(std::istream& in, ParseReport& report, double max_malformed_frac) {
    AssociationTrace trace;
    std::vector<std::size_t> lines;
    read_rows(in, "node_id,ap_id,t_start,t_end", report, max_malformed_frac, [&](const Row& row) {
        trace.records.push_back({trace.nodes.intern(row.a), trace.aps.intern(row.b), row.t_start, row.t_end});
        lines.push_back(row.line);
    });

    // A node cannot be associated twice with the same AP at once.
    std::vector<std::size_t> order(trace.records.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const auto& a = trace.records[x];
        const auto& b = trace.records[y];
        return std::tie(a.node, a.ap, a.t_start) < std::tie(b.node, b.ap, b.t_start);
    });
    std::vector<char> keep(trace.records.size(), 1);
    for (std::size_t k = 0; k < order.size();) {
        const auto& first = trace.records[order[k]];
        double reach = first.t_end;
        std::size_t j = k + 1;
        for (; j < order.size(); ++j) {
            const auto& r = trace.records[order[j]];
            if (r.node != first.node || r.ap != first.ap) break;
            if (r.t_start < reach) {
                keep[order[j]] = 0;
                report.anomalies.push_back({lines[order[j]], "node " + trace.nodes.name(r.node) +
                                                                 " overlaps itself at AP " + trace.aps.name(r.ap)});
            } else {
                reach = r.t_end;
            }
        }
        k = j;
    }
    std::vector<AssociationRecord> kept;
    for (std::size_t k = 0; k < trace.records.size(); ++k) {
        if (keep[k]) kept.push_back(trace.records[k]);
    }
    trace.records = std::move(kept);

    if (!trace.records.empty()) {
        double lo = std::numeric_limits<double>::infinity();
        for (const auto& r : trace.records) lo = std::min(lo, r.t_start);
        trace.time_offset = lo;
        for (auto& r : trace.records) {
            r.t_start -= lo;
            r.t_end -= lo;
            trace.duration = std::max(trace.duration, r.t_end);
        }
    }
    return trace;
}

namespace {

void sort_encounters(std::vector<DerivedEncounter>& encounters) {
    std::sort(encounters.begin(), encounters.end(), [](const DerivedEncounter& a, const DerivedEncounter& b) {
        return std::tie(a.t_start, a.node_u, a.node_v, a.t_end) < std::tie(b.t_start, b.node_u, b.node_v, b.t_end);
    });
}

}  // namespace

EncounterTrace parse_encounters(std::istream& in, ParseReport& report, double max_malformed_frac) {
    EncounterTrace trace;
    read_rows(in, "node_u,node_v,t_start,t_end", report, max_malformed_frac, [&](const Row& row) {
        if (row.a == row.b) {
            report.malformed.push_back({row.line, "node encounters itself"});
            return;
        }
        int u = trace.nodes.intern(row.a);
        int v = trace.nodes.intern(row.b);
        if (u > v) std::swap(u, v);
        trace.encounters.push_back({u, v, row.t_start, row.t_end});
    });
    // read_rows checked the malformed budget before self-encounters were
    // counted; check again.
    if (static_cast<double>(report.malformed.size()) > max_malformed_frac * static_cast<double>(report.data_lines)) {
        throw std::runtime_error("too many malformed lines: " + std::to_string(report.malformed.size()) + " of " +
                                 std::to_string(report.data_lines));
    }
    if (!trace.encounters.empty()) {
        double lo = std::numeric_limits<double>::infinity();
        for (const auto& e : trace.encounters) lo = std::min(lo, e.t_start);
        trace.time_offset = lo;
        for (auto& e : trace.encounters) {
            e.t_start -= lo;
            e.t_end -= lo;
            trace.duration = std::max(trace.duration, e.t_end);
        }
    }
    sort_encounters(trace.encounters);
    return trace;
}

EncounterTrace load_trace(const std::filesystem::path& path, TraceFormat format, ParseReport& report) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read trace file " + path.string());
    if (format == TraceFormat::encounters) return parse_encounters(in, report);

    AssociationTrace assoc = parse_associations(in, report);
    EncounterTrace out;
    out.encounters = derive_encounters(assoc.records);
    out.online_time = online_time(assoc.records, assoc.nodes.size());
    out.nodes = std::move(assoc.nodes);
    out.time_offset = assoc.time_offset;
    out.duration = assoc.duration;
    return out;
}

std::vector<DerivedEncounter> derive_encounters(std::span<const AssociationRecord> records) {
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const auto& a = records[x];
        const auto& b = records[y];
        return std::tie(a.ap, a.t_start, a.node, a.t_end) < std::tie(b.ap, b.t_start, b.node, b.t_end);
    });

    std::vector<DerivedEncounter> out;
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const AssociationRecord& r = records[order[k]];
        if (k == 0 || records[order[k - 1]].ap != r.ap) active.clear();
        std::erase_if(active, [&](std::size_t idx) { return records[idx].t_end <= r.t_start; });
        for (std::size_t idx : active) {
            const AssociationRecord& a = records[idx];
            if (a.node == r.node) continue;
            const double end = std::min(a.t_end, r.t_end);
            if (end > r.t_start) {
                out.push_back({std::min(a.node, r.node), std::max(a.node, r.node), r.t_start, end});
            }
        }
        active.push_back(order[k]);
    }
    sort_encounters(out);
    return out;
}

std::vector<double> online_time(std::span<const AssociationRecord> records, int n_nodes) {
    std::vector<double> total(static_cast<std::size_t>(n_nodes), 0.0);
    for (const auto& r : records) total.at(static_cast<std::size_t>(r.node)) += r.t_end - r.t_start;
    return total;
}

Histogram make_histogram(std::span<const double> values, std::size_t bins) {
    if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
    Histogram h;
    h.counts.assign(bins, 0);
    if (values.empty()) return h;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    h.lo = *lo;
    h.width = *hi > *lo ? (*hi - *lo) / static_cast<double>(bins) : 1.0;
    for (double v : values) {
        auto bin = static_cast<std::size_t>((v - h.lo) / h.width);
        h.counts[std::min(bin, bins - 1)]++;
    }
    return h;
}

double top_share(std::span<const std::size_t> counts, double fraction) {
    if (counts.empty()) return 0.0;
    std::vector<std::size_t> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto take = std::min(sorted.size(), static_cast<std::size_t>(std::ceil(fraction * sorted.size() - 1e-9)));
    const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
    if (total == 0.0) return 0.0;
    return std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(take), 0.0) / total;
}

TraceStats compute_stats(std::span<const DerivedEncounter> encounters, int n_nodes, double duration,
                         std::size_t bins) {
    if (!(duration > 0.0)) throw std::invalid_argument("trace duration must be > 0");
    if (n_nodes < 2) throw std::invalid_argument("trace statistics need at least two nodes");
    if (encounters.empty()) throw std::invalid_argument("trace has no encounters");
    const auto n = static_cast<std::size_t>(n_nodes);

    TraceStats st;
    st.n_nodes = n_nodes;
    st.duration = duration;
    st.total_encounters = encounters.size();
    st.encounters.assign(n, 0);
    std::vector<std::vector<int>> peers(n);
    for (const auto& e : encounters) {
        if (e.node_u < 0 || e.node_v < 0 || e.node_u >= n_nodes || e.node_v >= n_nodes) {
            throw std::out_of_range("encounter references unknown node id");
        }
        ++st.encounters[e.node_u];
        ++st.encounters[e.node_v];
        peers[e.node_u].push_back(e.node_v);
        peers[e.node_v].push_back(e.node_u);
    }
    st.unique_peers.resize(n);
    st.beta_hat.resize(n);
    const double norm = duration * (n_nodes - 1.0);
    std::vector<double> totals(n), uniques(n);
    for (std::size_t k = 0; k < n; ++k) {
        auto& p = peers[k];
        std::sort(p.begin(), p.end());
        st.unique_peers[k] = static_cast<std::size_t>(std::unique(p.begin(), p.end()) - p.begin());
        st.beta_hat[k] = static_cast<double>(st.encounters[k]) / norm;
        totals[k] = static_cast<double>(st.encounters[k]);
        uniques[k] = static_cast<double>(st.unique_peers[k]);
    }
    const Summary beta = summarize(st.beta_hat);
    st.mean_beta = beta.mean;
    st.median_beta = beta.median;
    st.median_unique = summarize(uniques).median;
    st.encounter_histogram = make_histogram(totals, bins);
    st.unique_histogram = make_histogram(uniques, bins);
    st.top20_share = top_share(st.encounters, 0.2);
    const double cutoff = 0.2 * (n_nodes - 1.0);
    st.below20_unique_fraction =
        static_cast<double>(std::count_if(uniques.begin(), uniques.end(), [&](double u) { return u < cutoff; })) /
        static_cast<double>(n);
    return st;
}

namespace {

nlohmann::json histogram_json(const Histogram& h) {
    return {{"lo", h.lo}, {"width", h.width}, {"counts", h.counts}};
}

}  // namespace

nlohmann::json to_json(const TraceStats& st) {
    return {{"n_nodes", st.n_nodes},
            {"duration", st.duration},
            {"total_encounters", st.total_encounters},
            {"mean_beta", st.mean_beta},
            {"median_beta", st.median_beta},
            {"median_unique", st.median_unique},
            {"top20_share", st.top20_share},
            {"below20_unique_fraction", st.below20_unique_fraction},
            {"encounters", st.encounters},
            {"unique_peers", st.unique_peers},
            {"beta_hat", st.beta_hat},
            {"encounter_histogram", histogram_json(st.encounter_histogram)},
            {"unique_histogram", histogram_json(st.unique_histogram)}};
}

void write_histogram_csv(std::ostream& out, const TraceStats& st) {
    const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    out << "histogram,bin_lo,bin_hi,count\n";
    auto emit = [&](const char* name, const Histogram& h) {
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            out << name << ',' << h.lo + h.width * static_cast<double>(b) << ','
                << h.lo + h.width * static_cast<double>(b + 1) << ',' << h.counts[b] << '\n';
        }
    };
    emit("total_encounters", st.encounter_histogram);
    emit("unique_encounters", st.unique_histogram);
    out.precision(old_precision);
}

Scenario parse_scenario(std::string_view text) {
    if (text == "fast_predator") return Scenario::fast_predator;
    if (text == "slow_predator") return Scenario::slow_predator;
    throw std::invalid_argument("unknown scenario '" + std::string(text) + "'");
}

std::string_view to_string(Scenario s) {
    return s == Scenario::fast_predator ? "fast_predator" : "slow_predator";
}

SeedPlan select_seeds(const TraceStats& stats, Scenario scenario, const SeedPlanOptions& options) {
    if (!(options.group_frac > 0.0 && options.group_frac < 0.5)) {
        throw std::invalid_argument("group_frac must lie in (0, 0.5)");
    }
    if (!(options.high_quantile > options.low_quantile)) {
        throw std::invalid_argument("high_quantile must exceed low_quantile");
    }
    const auto n = static_cast<std::size_t>(stats.n_nodes);
    const std::vector<double>& score = options.ranking.empty() ? stats.beta_hat : options.ranking;
    if (score.size() != n) throw std::invalid_argument("ranking must have one score per node");

    std::vector<int> ranked;
    for (std::size_t k = 0; k < n; ++k) {
        if (stats.encounters[k] > 0) ranked.push_back(static_cast<int>(k));
    }
    std::sort(ranked.begin(), ranked.end(), [&](int a, int b) {
        return std::tie(score[a], a) < std::tie(score[b], b);
    });
    const auto m = static_cast<std::ptrdiff_t>(ranked.size());
    const auto g = static_cast<std::ptrdiff_t>(std::ceil(options.group_frac * stats.n_nodes - 1e-9));
    if (m < 2 * g) {
        throw std::invalid_argument("only " + std::to_string(m) + " nodes appear in the trace; need " +
                                    std::to_string(2 * g) + " for two seed groups");
    }
    auto band = [&](double q) {
        const auto centre = static_cast<std::ptrdiff_t>(std::llround(q * static_cast<double>(m - 1)));
        return std::clamp<std::ptrdiff_t>(centre - g / 2, 0, m - g);
    };
    std::ptrdiff_t high = band(options.high_quantile);
    std::ptrdiff_t low = std::min(band(options.low_quantile), high - g);
    if (low < 0) {
        low = 0;
        high = g;
    }
    std::vector<int> high_group(ranked.begin() + high, ranked.begin() + high + g);
    std::vector<int> low_group(ranked.begin() + low, ranked.begin() + low + g);

    SeedPlan plan;
    plan.scenario = scenario;
    const double delay = std::abs(options.arrival_delay);
    if (scenario == Scenario::fast_predator) {
        plan.predator_group = std::move(high_group);
        plan.prey_group = std::move(low_group);
        plan.arrival_delay = -delay;
    } else {
        plan.predator_group = std::move(low_group);
        plan.prey_group = std::move(high_group);
        plan.arrival_delay = delay;
    }
    return plan;
}

TraceReplayer::TraceReplayer(std::span<const DerivedEncounter> encounters, int n_nodes, double trace_end,
                             const ReplayOptions& options)
    : present_(static_cast<std::size_t>(std::max(n_nodes, 0)), 0),
      n_nodes_(n_nodes),
      trace_end_(trace_end),
      options_(options) {
    ModelParams check;
    check.coop_frac = options.coop_frac;
    check.immune_frac = options.immune_frac;
    check.on_prob = options.on_prob;
    check.i_a0 = check.i_b0 = 0;
    validate(check);
    if (n_nodes < 2) throw std::invalid_argument("replay needs at least two nodes");
    if (!(trace_end > 0.0)) throw std::invalid_argument("trace end must be > 0");
    if (options.opportunity_interval < 0.0) throw std::invalid_argument("opportunity_interval must be >= 0");

    for (const auto& e : encounters) {
        if (e.node_u < 0 || e.node_v < 0 || e.node_u >= n_nodes || e.node_v >= n_nodes) {
            throw std::out_of_range("encounter references unknown node id");
        }
        present_[e.node_u] = present_[e.node_v] = 1;
        events_.push_back({e.t_start, e.node_u, e.node_v, EventSource::trace});
        if (options.opportunity_interval > 0.0) {
            for (double t = e.t_start + options.opportunity_interval; t < e.t_end; t += options.opportunity_interval) {
                events_.push_back({t, e.node_u, e.node_v, EventSource::trace});
            }
        }
    }
    std::stable_sort(events_.begin(), events_.end(),
                     [](const EncounterEvent& a, const EncounterEvent& b) { return a.time < b.time; });
}

EventLog TraceReplayer::replay(const SeedPlan& plan, std::uint64_t rng_seed) const {
    if (plan.prey_group.empty() || plan.predator_group.empty()) throw std::invalid_argument("empty seed group");
    Rng profile_rng(derive_seed(rng_seed, 0));
    Rng trial_rng(derive_seed(rng_seed, 2));

    const int prey = plan.prey_group[profile_rng.below(plan.prey_group.size())];
    const int predator = plan.predator_group[profile_rng.below(plan.predator_group.size())];
    for (int id : {prey, predator}) {
        if (id < 0 || id >= n_nodes_ || !present_[id]) {
            throw std::invalid_argument("seed node " + std::to_string(id) + " does not appear in the trace");
        }
    }
    if (prey == predator) throw std::invalid_argument("seed groups overlap");

    ModelParams params;
    params.n_total = n_nodes_;
    params.coop_frac = options_.coop_frac;
    params.immune_frac = options_.immune_frac;
    const int coop = cooperative_count(params);
    const int immune = immune_count(params);
    const int prey_seeds[] = {prey};
    const int predator_seeds[] = {predator};
    auto profiles = assign_profiles(n_nodes_, coop, immune, prey_seeds, predator_seeds, profile_rng);

    std::vector<SeedInjection> seeds = {
        {std::max(0.0, -plan.arrival_delay), prey, Compartment::PreyInfected},
        {std::max(0.0, plan.arrival_delay), predator, Compartment::PredatorInfected},
    };
    RoundEngine engine(std::move(profiles), options_.on_prob, trial_rng, std::move(seeds));
    engine.advance_to(0.0);
    for (const auto& event : events_) {
        if (engine.absorbed() || event.time > trace_end_) break;
        engine.process(event);
    }
    return std::move(engine).finish(trace_end_);
}

EventLog replay_round(std::span<const DerivedEncounter> encounters, int n_nodes, double trace_end,
                      const SeedPlan& plan, const ReplayOptions& options, std::uint64_t rng_seed) {
    return TraceReplayer(encounters, n_nodes, trace_end, options).replay(plan, rng_seed);
}

std::vector<RoundOutcome> replay_rounds(const TraceReplayer& replayer, const SeedPlan& plan,
                                        const BatchOptions& options) {
    if (options.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    std::vector<RoundOutcome> outcomes(options.rounds);
    parallel_for(options.rounds, options.threads, [&](std::size_t k) {
        RoundOutcome& out = outcomes[k];
        out.index = k;
        out.seed = derive_seed(options.master_seed, k);
        try {
            EventLog log = replayer.replay(plan, out.seed);
            out.metrics = extract_metrics(log);
            if (options.keep_logs) out.log = std::move(log);
        } catch (const std::exception& e) {
            out.error = e.what();
        }
    });
    return outcomes;
}

SyntheticTrace generate_synthetic_trace(const SyntheticTraceConfig& config) {
    if (config.n_nodes < 2) throw std::invalid_argument("synthetic trace needs at least two nodes");
    if (!(config.duration > 0.0)) throw std::invalid_argument("synthetic trace duration must be > 0");
    if (!(config.mean_beta >= 0.0) || !(config.skew >= 0.0) || !(config.mean_contact > 0.0)) {
        throw std::invalid_argument("synthetic trace rates must be non-negative");
    }
    Rng rng(config.seed);
    const auto n = static_cast<std::size_t>(config.n_nodes);
    SyntheticTrace out;
    out.duration = config.duration;
    out.weights.resize(n);
    for (auto& w : out.weights) w = std::exp(config.skew * rng.normal());

    double sum = 0.0, sum_sq = 0.0;
    for (double w : out.weights) {
        sum += w;
        sum_sq += w * w;
    }
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    const double mean_product = 0.5 * (sum * sum - sum_sq) / pairs;
    const double scale = 1.0 / std::sqrt(mean_product);
    for (auto& w : out.weights) w *= scale;

    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            const double expected = config.mean_beta * out.weights[u] * out.weights[v] * config.duration;
            const auto count = rng.poisson(expected);
            for (std::uint64_t k = 0; k < count; ++k) {
                const double start = rng.uniform() * config.duration;
                const double end = std::min(start + rng.exponential(1.0 / config.mean_contact), config.duration);
                if (end > start) {
                    out.encounters.push_back({static_cast<int>(u), static_cast<int>(v), start, end});
                }
            }
        }
    }
    sort_encounters(out.encounters);
    return out;
}

void write_encounter_csv(std::ostream& out, std::span<const DerivedEncounter> encounters, const NameTable* nodes) {
    const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    out << "node_u,node_v,t_start,t_end\n";
    for (const auto& e : encounters) {
        if (nodes) {
            out << nodes->name(e.node_u) << ',' << nodes->name(e.node_v);
        } else {
            out << e.node_u << ',' << e.node_v;
        }
        out << ',' << e.t_start << ',' << e.t_end << '\n';
    }
    out.precision(old_precision);
}

}  // namespace wormsim::trace

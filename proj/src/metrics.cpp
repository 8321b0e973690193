#include "wormsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace wormsim {

nlohmann::json to_json(const MetricSet& m) {
    nlohmann::json j;
    j["ti"] = m.ti;
    j["mi"] = m.mi;
    j["tl"] = m.tl;
    j["al"] = m.al;
    j["ta"] = m.ta ? nlohmann::json(*m.ta) : nlohmann::json(nullptr);
    j["tr"] = m.tr ? nlohmann::json(*m.tr) : nlohmann::json(nullptr);
    j["censored"] = m.censored();
    return j;
}

namespace {

[[noreturn]] void malformed(std::size_t index, const std::string& what) {
    throw std::runtime_error("malformed event log at transition " + std::to_string(index) + ": " + what);
}

bool cause_matches(const Transition& tr) {
    using C = Compartment;
    switch (tr.cause) {
        case TransitionCause::seed: return tr.from == C::Susceptible;
        case TransitionCause::prey_infection: return tr.from == C::Susceptible && tr.to == C::PreyInfected;
        case TransitionCause::vaccination:
            return (tr.from == C::Susceptible || tr.from == C::ImmuneSusceptible) && tr.to == C::PredatorInfected;
        case TransitionCause::termination: return tr.from == C::PreyInfected && tr.to == C::PredatorInfected;
    }
    return false;
}

// Walks the log once, checking each record against the current state.
template <class Visit>
void replay(const EventLog& log, Visit&& visit) {
    std::vector<Compartment> current(log.profiles.size());
    for (std::size_t k = 0; k < log.profiles.size(); ++k) current[k] = log.profiles[k].initial_compartment();
    double last_time = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < log.transitions.size(); ++k) {
        const Transition& tr = log.transitions[k];
        if (tr.node_id < 0 || tr.node_id >= static_cast<int>(current.size())) malformed(k, "unknown node id");
        if (tr.time < last_time) malformed(k, "time goes backwards");
        if (current[tr.node_id] != tr.from) {
            malformed(k, "node " + std::to_string(tr.node_id) + " is in " +
                             std::string(to_string(current[tr.node_id])) + ", not " +
                             std::string(to_string(tr.from)));
        }
        if (!is_allowed_edge(tr.from, tr.to)) {
            malformed(k, "edge " + std::string(to_string(tr.from)) + "->" + std::string(to_string(tr.to)) +
                             " is not allowed");
        }
        if (!cause_matches(tr)) malformed(k, "cause does not match edge");
        last_time = tr.time;
        current[tr.node_id] = tr.to;
        visit(tr);
    }
}

}  // namespace

MetricSet extract_metrics(const EventLog& log) {
    const auto n = log.profiles.size();
    std::size_t cooperative = 0;
    std::size_t pool = 0;
    for (const auto& p : log.profiles) {
        if (p.immune && !p.cooperative) throw std::runtime_error("malformed profile: immune but not cooperative");
        cooperative += p.cooperative;
        pool += p.cooperative && !p.immune;
    }

    MetricSet m;
    std::vector<double> infected_at(n, 0.0);
    std::size_t prey = 0;
    std::size_t predator = 0;
    std::size_t prey_seeded = 0;
    std::size_t peak = 0;
    std::size_t ever = 0;
    double last_termination = 0.0;
    if (cooperative == 0) m.ta = 0.0;

    replay(log, [&](const Transition& tr) {
        if (tr.cause == TransitionCause::seed && tr.to == Compartment::PreyInfected) ++prey_seeded;
        if (tr.to == Compartment::PreyInfected) {
            infected_at[tr.node_id] = tr.time;
            ++prey;
            ++ever;
            peak = std::max(peak, prey);
        }
        if (tr.from == Compartment::PreyInfected) {
            --prey;
            m.tl += tr.time - infected_at[tr.node_id];
            last_termination = tr.time;
        }
        if (tr.to == Compartment::PredatorInfected) {
            ++predator;
            if (predator == cooperative) m.ta = tr.time;
        }
    });

    if (prey > 0) {
        // Prey still alive: lifetime truncated at the horizon.
        std::vector<Compartment> final_state(n);
        for (std::size_t k = 0; k < n; ++k) final_state[k] = log.profiles[k].initial_compartment();
        for (const auto& tr : log.transitions) final_state[tr.node_id] = tr.to;
        for (std::size_t k = 0; k < n; ++k) {
            if (final_state[k] == Compartment::PreyInfected) m.tl += log.horizon - infected_at[k];
        }
        m.tl_censored = true;
    } else if (prey_seeded == static_cast<std::size_t>(log.prey_seeds)) {
        m.tr = ever > 0 ? last_termination : 0.0;
    }

    m.ti = static_cast<double>(ever);
    m.mi = static_cast<double>(peak);
    if (ever > 0) {
        m.al = m.tl / m.ti;
    } else {
        m.al_undefined = true;
    }
    if (pool > 0) {
        m.ti_relative = m.ti / static_cast<double>(pool);
        m.mi_relative = m.mi / static_cast<double>(pool);
    }

    if (static_cast<double>(prey_seeded) > m.mi || m.mi > m.ti) throw std::logic_error("metrics violate I_A(0) <= MI <= TI");
    if (m.ta && m.tr && *m.tr > *m.ta) throw std::logic_error("metrics violate TR <= TA");
    return m;
}

std::optional<double> saturation_time(const EventLog& log, Compartment c) {
    if (c != Compartment::PreyInfected && c != Compartment::PredatorInfected) {
        throw std::invalid_argument("saturation is defined for prey or predator only");
    }
    std::size_t eligible = 0;
    for (const auto& p : log.profiles) {
        eligible += c == Compartment::PreyInfected ? p.cooperative && !p.immune : p.cooperative;
    }
    if (eligible == 0) return 0.0;
    std::size_t held = 0;
    std::optional<double> reached;
    replay(log, [&](const Transition& tr) {
        if (tr.to == c) ++held;
        if (tr.from == c) --held;
        if (!reached && held == eligible) reached = tr.time;
    });
    return reached;
}

double Summary::std_error() const {
    return count > 0 ? stddev / std::sqrt(static_cast<double>(count)) : 0.0;
}

Summary summarize(std::vector<double> values) {
    Summary s;
    s.count = values.size();
    if (values.empty()) {
        s.mean = s.median = s.stddev = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    // Sorting first makes the sums independent of input order.
    std::sort(values.begin(), values.end());
    s.median = values[(values.size() - 1) / 2];
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

RoundAggregate aggregate(std::span<const MetricSet> metric_sets) {
    if (metric_sets.empty()) throw std::invalid_argument("cannot aggregate an empty sequence");
    RoundAggregate agg;
    agg.rounds = metric_sets.size();
    auto collect = [&](auto field) {
        std::vector<double> values;
        values.reserve(metric_sets.size());
        for (const auto& m : metric_sets) values.push_back(field(m));
        return summarize(std::move(values));
    };
    auto collect_optional = [&](auto field) {
        std::vector<double> values;
        for (const auto& m : metric_sets) {
            if (const auto v = field(m)) values.push_back(*v);
        }
        Summary s = summarize(std::move(values));
        s.censored = metric_sets.size() - s.count;
        return s;
    };
    agg.ti = collect([](const MetricSet& m) { return m.ti; });
    agg.mi = collect([](const MetricSet& m) { return m.mi; });
    agg.tl = collect([](const MetricSet& m) { return m.tl; });
    agg.al = collect([](const MetricSet& m) { return m.al; });
    agg.ti_relative = collect([](const MetricSet& m) { return m.ti_relative; });
    agg.mi_relative = collect([](const MetricSet& m) { return m.mi_relative; });
    agg.ta = collect_optional([](const MetricSet& m) { return m.ta; });
    agg.tr = collect_optional([](const MetricSet& m) { return m.tr; });
    for (const auto& m : metric_sets) {
        agg.tl.censored += m.tl_censored;
        agg.al.censored += m.al_undefined;
    }
    return agg;
}

namespace {

nlohmann::json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const Summary& s) {
    return {{"mean", number_or_null(s.mean)},
            {"median", number_or_null(s.median)},
            {"stddev", number_or_null(s.stddev)},
            {"count", s.count},
            {"censored", s.censored}};
}

nlohmann::json to_json(const RoundAggregate& agg) {
    return {{"rounds", agg.rounds},
            {"ti", to_json(agg.ti)},
            {"mi", to_json(agg.mi)},
            {"tl", to_json(agg.tl)},
            {"al", to_json(agg.al)},
            {"ta", to_json(agg.ta)},
            {"tr", to_json(agg.tr)},
            {"ti_rel", to_json(agg.ti_relative)},
            {"mi_rel", to_json(agg.mi_relative)}};
}

void write_round_csv_header(std::ostream& out) {
    out << "round,ti,mi,tl,al,ta,tr,ti_rel,mi_rel,censored_ta,censored_tr\n";
}

void write_round_csv_row(std::ostream& out, std::size_t round, const MetricSet& m) {
    const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    out << round << ',' << m.ti << ',' << m.mi << ',' << m.tl << ',' << m.al << ',';
    if (m.ta) out << *m.ta;
    out << ',';
    if (m.tr) out << *m.tr;
    out << ',' << m.ti_relative << ',' << m.mi_relative << ',' << (m.ta ? 0 : 1) << ',' << (m.tr ? 0 : 1) << '\n';
    out.precision(old_precision);
}

}  // namespace wormsim

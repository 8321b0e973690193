#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "wormsim/encounter_sim.hpp"
#include "wormsim/metric_set.hpp"

namespace wormsim {

// Replays the log and extracts TI, MI, TL, AL, TA, TR.
//
// TI counts nodes ever prey-infected (seeds included) and MI the peak
// concurrent prey count. TL sums each prey's lifetime; a prey alive at the
// horizon contributes horizon - infected_at and sets tl_censored. TR is the
// last termination once no prey remain; TA is the moment every cooperative
// node is predator-infected. Relative counts divide by the realized number
// of cooperative non-immune nodes.
//
// Throws std::runtime_error if the log leaves the allowed edge set or is
// otherwise inconsistent with its profiles.
MetricSet extract_metrics(const EventLog& log);

// First time every node eligible for `c` (cooperative non-immune for prey,
// cooperative for predator) is in `c`. Empty if that never happens.
std::optional<double> saturation_time(const EventLog& log, Compartment c);

struct Summary {
    double mean = 0.0;
    double median = 0.0;  // lower-middle element for even counts
    double stddev = 0.0;  // sample standard deviation; 0 for a single value
    std::size_t count = 0;     // values in the moments
    std::size_t censored = 0;  // rounds flagged for this metric

    double std_error() const;
};

struct RoundAggregate {
    std::size_t rounds = 0;
    Summary ti, mi, tl, al, ta, tr, ti_relative, mi_relative;
};

// Censored TA/TR are left out of their moments and counted; TL and AL keep
// their flagged values in the moments.
RoundAggregate aggregate(std::span<const MetricSet> metric_sets);

Summary summarize(std::vector<double> values);

nlohmann::json to_json(const Summary& summary);
nlohmann::json to_json(const RoundAggregate& agg);

// round,ti,mi,tl,al,ta,tr,ti_rel,mi_rel,censored_ta,censored_tr
void write_round_csv_header(std::ostream& out);
void write_round_csv_row(std::ostream& out, std::size_t round, const MetricSet& m);

}  // namespace wormsim

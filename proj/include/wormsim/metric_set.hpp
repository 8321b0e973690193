#pragma once

#include <optional>

#include "json.hpp"

namespace wormsim {

// The six infection metrics of one run, plus prey-relative counts.
//
// ta and tr are empty when the defining event did not happen before the end
// of the run. tl_censored marks a TL that includes prey still alive at the
// horizon (their lifetime is truncated there). al_undefined marks TI == 0,
// in which case al is reported as 0.
struct MetricSet {
    double ti = 0.0;
    double mi = 0.0;
    double tl = 0.0;
    double al = 0.0;
    std::optional<double> ta;
    std::optional<double> tr;
    double ti_relative = 0.0;  // TI / N*
    double mi_relative = 0.0;  // MI / N*
    bool tl_censored = false;
    bool al_undefined = false;

    bool censored() const { return !ta || !tr || tl_censored; }
};

// Flat object with keys ti, mi, tl, al, ta, tr, censored. Censored ta/tr are
// written as null.
nlohmann::json to_json(const MetricSet& metrics);

}  // namespace wormsim

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "oracles/intervals.hpp"
#include "support.hpp"
#include "wormsim/metrics.hpp"
#include "wormsim/trace.hpp"

using namespace wormsim;
using namespace wormsim::trace;

namespace {

AssociationTrace parse_assoc(const std::string& text, ParseReport& report, double budget = 0.01) {
    std::istringstream in(text);
    return parse_associations(in, report, budget);
}

std::vector<DerivedEncounter> encounters_of(std::initializer_list<DerivedEncounter> list) { return list; }

}  // namespace

TEST_CASE("association parsing: header, comments, drops and normalization") {
    ParseReport report;
    const auto t = parse_assoc(
        "# campus trace\n"
        "node_id,ap_id,t_start,t_end\n"
        "\n"
        "aa:01,ap1,1000,1010\n"
        "aa:02,ap1,1005,1020\n"
        "aa:03,ap2,1007,1007\n",
        report);
    CHECK(report.data_lines == 3);
    CHECK(report.dropped_zero_duration == 1);
    CHECK(report.malformed.empty());
    CHECK(t.records.size() == 2);
    CHECK(t.time_offset == 1000.0);
    CHECK(t.duration == 20.0);
    CHECK(t.records[0].t_start == 0.0);
    CHECK(t.nodes.find("aa:02") == 1);
    CHECK(t.nodes.find("aa:03") == -1);

    ParseReport r2;
    CHECK_THROWS_AS(parse_assoc("a,b,c,d\n1,2,3,4\n", r2), std::runtime_error);
}

TEST_CASE("malformed lines count against a budget") {
    std::string text = "node_id,ap_id,t_start,t_end\n";
    for (int k = 0; k < 200; ++k) text += "n" + std::to_string(k % 7) + ",ap,"  + std::to_string(k * 10) + "," + std::to_string(k * 10 + 5) + "\n";
    text += "n1,ap,abc,5\n";
    text += "n1,ap,50\n";
    ParseReport ok;
    CHECK_NOTHROW(parse_assoc(text, ok));
    CHECK(ok.malformed.size() == 2);
    CHECK(ok.malformed[0].line == 202);

    text += "n1,ap,9,3\n";
    ParseReport too_many;
    CHECK_THROWS_AS(parse_assoc(text, too_many), std::runtime_error);
}

TEST_CASE("self-overlap at one access point keeps the first record") {
    ParseReport report;
    const auto t = parse_assoc(
        "node_id,ap_id,t_start,t_end\n"
        "a,ap1,0,100\n"
        "a,ap1,50,150\n"
        "a,ap1,100,120\n"
        "a,ap2,10,20\n",
        report);
    CHECK(t.records.size() == 3);
    REQUIRE(report.anomalies.size() == 1);
    CHECK(report.anomalies[0].line == 3);
}

TEST_CASE("encounter parsing canonicalizes and sorts") {
    std::istringstream in(
        "node_u,node_v,t_start,t_end\n"
        "b,a,20,30\n"
        "a,c,10,12\n");
    ParseReport report;
    const auto t = parse_encounters(in, report, 0.5);
    REQUIRE(t.encounters.size() == 2);
    // ids follow first appearance: b=0, a=1, c=2
    CHECK(t.encounters[0] == DerivedEncounter{1, 2, 0.0, 2.0});
    CHECK(t.encounters[1] == DerivedEncounter{0, 1, 10.0, 20.0});
    CHECK(t.time_offset == 10.0);

    std::istringstream self("node_u,node_v,t_start,t_end\na,a,1,2\nb,c,1,2\n");
    ParseReport r2;
    CHECK_THROWS_AS(parse_encounters(self, r2), std::runtime_error);
}

TEST_CASE("co-location on a hand example") {
    const std::vector<AssociationRecord> records = {
        {0, 0, 0.0, 10.0}, {1, 0, 5.0, 20.0}, {2, 0, 10.0, 15.0}, {2, 1, 0.0, 30.0}, {0, 1, 25.0, 40.0}};
    const auto out = derive_encounters(records);
    REQUIRE(out.size() == 3);
    CHECK(out[0] == DerivedEncounter{0, 1, 5.0, 10.0});
    CHECK(out[1] == DerivedEncounter{1, 2, 10.0, 15.0});
    CHECK(out[2] == DerivedEncounter{0, 2, 25.0, 30.0});
}

TEST_CASE("property: sweep line equals the quadratic oracle") {
    testing::Gen gen(17);
    for (int trial = 0; trial < 300; ++trial) {
        const int count = gen.integer(0, 200);
        const int nodes = gen.integer(2, 15);
        const int aps = gen.integer(1, 4);
        const bool integral = gen.coin();
        std::vector<AssociationRecord> records;
        std::vector<oracle::Association> plain;
        for (int k = 0; k < count; ++k) {
            double a = integral ? gen.integer(0, 50) : gen.real(0.0, 50.0);
            double b = integral ? gen.integer(0, 50) : gen.real(0.0, 50.0);
            if (a > b) std::swap(a, b);
            if (a == b) b += 1.0;
            const int node = gen.integer(0, nodes - 1);
            const int ap = gen.integer(0, aps - 1);
            records.push_back({node, ap, a, b});
            plain.push_back({node, ap, a, b});
        }
        const auto fast = derive_encounters(records);
        const auto slow = oracle::pairwise_overlaps(plain);
        REQUIRE(fast.size() == slow.size());
        for (std::size_t k = 0; k < fast.size(); ++k) {
            CHECK(fast[k].node_u == slow[k].u);
            CHECK(fast[k].node_v == slow[k].v);
            CHECK(fast[k].t_start == slow[k].t_start);
            CHECK(fast[k].t_end == slow[k].t_end);
        }
    }
}

TEST_CASE("statistics of a small trace") {
    // 5 nodes over 100 s; node 4 never appears
    const auto enc = encounters_of({{0, 1, 0, 1}, {0, 1, 2, 3}, {0, 2, 4, 5}, {0, 3, 6, 7}, {1, 2, 8, 9}});
    const TraceStats st = compute_stats(enc, 5, 100.0, 4);
    CHECK(st.total_encounters == 5);
    CHECK(st.encounters == std::vector<std::size_t>{4, 3, 2, 1, 0});
    CHECK(st.unique_peers == std::vector<std::size_t>{3, 2, 2, 1, 0});
    CHECK(st.beta_hat[0] == doctest::Approx(4.0 / 400.0));
    CHECK(st.median_beta == doctest::Approx(2.0 / 400.0));
    CHECK(st.median_unique == 2.0);
    CHECK(st.top20_share == doctest::Approx(0.4));  // top node holds 4 of 10 endpoints
    CHECK(st.below20_unique_fraction == doctest::Approx(0.2));  // only node 4 meets < 0.8 peers
    CHECK(st.encounter_histogram.counts == std::vector<std::size_t>{1, 1, 1, 2});

    CHECK_THROWS_AS(compute_stats(enc, 5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(compute_stats(enc, 1, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(compute_stats({}, 5, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(compute_stats(enc, 3, 10.0), std::out_of_range);

    std::ostringstream csv;
    write_histogram_csv(csv, st);
    CHECK(csv.str().rfind("histogram,bin_lo,bin_hi,count\ntotal_encounters,0,1,1\n", 0) == 0);
}

TEST_CASE("histogram and share helpers") {
    const std::vector<double> same = {3.0, 3.0};
    const Histogram h = make_histogram(same, 3);
    CHECK(h.counts == std::vector<std::size_t>{2, 0, 0});
    CHECK_THROWS_AS(make_histogram(same, 0), std::invalid_argument);
    const std::vector<std::size_t> counts = {10, 0, 0, 0, 0, 0, 0, 0, 0, 10};
    CHECK(top_share(counts, 0.2) == 1.0);
    CHECK(top_share(counts, 0.1) == 0.5);
    CHECK(top_share(std::vector<std::size_t>{}, 0.2) == 0.0);
}

TEST_CASE("seed bands by rank") {
    TraceStats st;
    st.n_nodes = 100;
    st.encounters.assign(100, 1);
    st.beta_hat.resize(100);
    for (int k = 0; k < 100; ++k) st.beta_hat[k] = 100.0 - k;  // node 99 is the least active
    const SeedPlan fast = select_seeds(st, Scenario::fast_predator);
    // ascending ranking is node 99, 98, ..., 0; bands centred on ranks 89 and 59
    CHECK(fast.predator_group == std::vector<int>{11, 10, 9});
    CHECK(fast.prey_group == std::vector<int>{41, 40, 39});
    CHECK(fast.arrival_delay == -539795.0);
    const SeedPlan slow = select_seeds(st, Scenario::slow_predator);
    CHECK(slow.predator_group == fast.prey_group);
    CHECK(slow.prey_group == fast.predator_group);
    CHECK(slow.arrival_delay == 539795.0);

    SeedPlanOptions custom;
    custom.ranking.assign(100, 0.0);
    for (int k = 0; k < 100; ++k) custom.ranking[k] = k;
    CHECK(select_seeds(st, Scenario::fast_predator, custom).predator_group == std::vector<int>{88, 89, 90});

    st.encounters.assign(100, 0);
    st.encounters[0] = st.encounters[1] = 1;
    CHECK_THROWS_AS(select_seeds(st, Scenario::fast_predator), std::invalid_argument);
    CHECK_THROWS_AS(parse_scenario("medium"), std::invalid_argument);
}

TEST_CASE("replay over a scripted trace") {
    // prey seed 0 meets 2 at t=10, predator seed 1 meets 0 at t=20 and 2 at t=30,
    // then 0 meets 3 at t=40
    const auto enc = encounters_of({{0, 2, 10, 11}, {0, 1, 20, 21}, {1, 2, 30, 31}, {0, 3, 40, 41}});
    SeedPlan plan;
    plan.prey_group = {0};
    plan.predator_group = {1};
    const TraceReplayer replayer(enc, 4, 50.0);
    const EventLog log = replayer.replay(plan, 1);
    const MetricSet m = extract_metrics(log);
    CHECK(m.ti == 2);
    CHECK(m.mi == 2);
    CHECK(m.tl == doctest::Approx(20.0 + 20.0));
    CHECK(*m.tr == 30.0);
    CHECK(*m.ta == 40.0);  // node 0, now a predator, vaccinates 3
    CHECK(log.horizon == 50.0);

    // predator first by 15 s: node 0 is vaccinated only if it meets a predator
    plan.arrival_delay = -15.0;
    const MetricSet late_prey = extract_metrics(replayer.replay(plan, 1));
    CHECK(late_prey.ti == 1);

    SeedPlan absent = plan;
    absent.prey_group = {3};
    absent.predator_group = {1};
    CHECK_NOTHROW(replayer.replay(absent, 1));
    const TraceReplayer five(enc, 5, 50.0);
    absent.prey_group = {4};
    CHECK_THROWS_AS(five.replay(absent, 1), std::invalid_argument);
}

TEST_CASE("opportunity interval adds repeated link trials") {
    const auto enc = encounters_of({{0, 1, 0, 100}, {0, 2, 0, 1}});
    SeedPlan plan;
    plan.prey_group = {0};
    plan.predator_group = {2};
    plan.arrival_delay = 1000.0;  // keep the predator away
    ReplayOptions once;
    once.on_prob = 0.01;
    ReplayOptions often = once;
    often.opportunity_interval = 1.0;
    int hits_once = 0, hits_often = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        hits_once += extract_metrics(TraceReplayer(enc, 3, 200.0, once).replay(plan, s)).ti > 1;
        hits_often += extract_metrics(TraceReplayer(enc, 3, 200.0, often).replay(plan, s)).ti > 1;
    }
    CHECK(hits_once < 10);
    CHECK(hits_often > 80);
}

TEST_CASE("replay batches are deterministic") {
    SyntheticTraceConfig cfg;
    cfg.n_nodes = 80;
    cfg.duration = 86400.0;
    cfg.mean_beta = 2e-5;
    const auto t = generate_synthetic_trace(cfg);
    const TraceStats st = compute_stats(t.encounters, cfg.n_nodes, t.duration);
    SeedPlanOptions opts;
    opts.arrival_delay = 3600.0;
    const SeedPlan plan = select_seeds(st, Scenario::fast_predator, opts);
    const TraceReplayer replayer(t.encounters, cfg.n_nodes, t.duration);
    const auto a = replay_rounds(replayer, plan, {30, 5, 1, false});
    const auto b = replay_rounds(replayer, plan, {30, 5, 3, false});
    for (std::size_t k = 0; k < a.size(); ++k) {
        REQUIRE(a[k].metrics);
        CHECK(a[k].metrics->tl == b[k].metrics->tl);
        CHECK(a[k].metrics->ti == b[k].metrics->ti);
    }
}

TEST_CASE("synthetic traces") {
    SyntheticTraceConfig cfg;
    cfg.n_nodes = 200;
    cfg.duration = 10 * 86400.0;
    cfg.mean_beta = 1e-6;
    const auto a = generate_synthetic_trace(cfg);
    const auto b = generate_synthetic_trace(cfg);
    CHECK(a.encounters == b.encounters);

    double sum = 0.0, sum_sq = 0.0;
    for (double w : a.weights) {
        sum += w;
        sum_sq += w * w;
    }
    const double pairs = 200.0 * 199.0 / 2.0;
    CHECK(0.5 * (sum * sum - sum_sq) / pairs == doctest::Approx(1.0));
    const double expected = cfg.mean_beta * pairs * cfg.duration;
    CHECK(std::abs(a.encounters.size() - expected) < 0.15 * expected);
    for (const auto& e : a.encounters) {
        CHECK(e.node_u < e.node_v);
        CHECK(e.t_end > e.t_start);
        CHECK(e.t_end <= cfg.duration);
    }
    CHECK(compute_stats(a.encounters, 200, a.duration).top20_share > 0.6);

    cfg.skew = 0.0;
    const auto flat = generate_synthetic_trace(cfg);
    CHECK(compute_stats(flat.encounters, 200, flat.duration).top20_share < 0.3);
    cfg.n_nodes = 1;
    CHECK_THROWS_AS(generate_synthetic_trace(cfg), std::invalid_argument);
}

TEST_CASE("trace files round-trip through both formats") {
    const auto dir = std::filesystem::temp_directory_path() / "wormsim_trace_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "assoc.csv");
        out << "node_id,ap_id,t_start,t_end\nx,ap,100,200\ny,ap,150,300\nz,ap2,0,10\n";
    }
    ParseReport report;
    const auto from_assoc = load_trace(dir / "assoc.csv", TraceFormat::associations, report);
    REQUIRE(from_assoc.encounters.size() == 1);
    CHECK(from_assoc.encounters[0] == DerivedEncounter{0, 1, 150.0, 200.0});
    CHECK(from_assoc.online_time == std::vector<double>{100.0, 150.0, 10.0});
    {
        std::ofstream out(dir / "enc.csv");
        write_encounter_csv(out, from_assoc.encounters, &from_assoc.nodes);
    }
    ParseReport r2;
    const auto back = load_trace(dir / "enc.csv", TraceFormat::encounters, r2);
    REQUIRE(back.encounters.size() == 1);
    CHECK(back.nodes.name(back.encounters[0].node_u) == "x");
    CHECK(back.encounters[0].duration() == 50.0);
    CHECK_THROWS_AS(load_trace(dir / "missing.csv", TraceFormat::encounters, r2), std::runtime_error);
    std::filesystem::remove_all(dir);
}

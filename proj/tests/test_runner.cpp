#include <catch_amalgamated.hpp>

#include <gridlight/runner.hpp>

#include "helpers.hpp"

using namespace gridlight;

namespace {

Json uniform_flows(const Grid& g, const RoadNetwork& net, double interval) {
    Json doc = Json::array();
    for (int r = 1; r <= g.rows; ++r) {
        doc.push_back(flow_entry(route_from_roads(net, g.ew_roads(r)), 0, 3600, interval));
        doc.push_back(flow_entry(route_from_roads(net, g.ew_roads(r, false)), 0, 3600, interval));
    }
    for (int c = 1; c <= g.cols; ++c) {
        doc.push_back(flow_entry(route_from_roads(net, g.ns_roads(c)), 0, 3600, interval));
        doc.push_back(flow_entry(route_from_roads(net, g.ns_roads(c, false)), 0, 3600, interval));
    }
    return doc;
}

ControllerSet all_of(const RoadNetwork& net, const std::string& kind) {
    return build_controllers(net, parse_assignment(Json{{"*", {{"kind", kind}}}}), 0.5, 5);
}

}  // namespace

TEST_CASE("run with no traffic reports zero vehicles and omitted ATT") {
    Grid g{2, 2};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows;
    ControllerSet controllers = all_of(net, "FixedTime");
    RunOptions opts;
    opts.duration_s = 300;
    RunResult res = run(net, cfg, flows, controllers, opts);
    CHECK(res.metrics.vehicles_entered == 0);
    CHECK(res.metrics.to_json()["att"].is_null());
    // FixedTime: first decision repeats the initial phase (30 s), every later
    // one changes it (35 s): decisions at t = 0, 30, 65, ..., 275.
    int decisions = 0;
    for (const Json& line : res.trace.lines)
        if (line["type"] == "decision") ++decisions;
    CHECK(decisions == 4 * 9);
}

TEST_CASE("same seed gives bit-identical metrics and trace") {
    auto once = [] {
        Grid g{2, 2};
        RoadNetwork net = g.network();
        SimConfig cfg;
        cfg.seed = 42;
        FlowSpec flows = load_flows(uniform_flows(g, net, 6.0), net);
        ControllerSet controllers = all_of(net, "ComplexityAware");
        RunOptions opts;
        opts.duration_s = 600;
        RunResult res = run(net, cfg, flows, controllers, opts);
        return std::pair(res.metrics.to_json().dump(), res.trace.to_jsonl());
    };
    auto [m1, t1] = once();
    auto [m2, t2] = once();
    CHECK(m1 == m2);
    CHECK(t1 == t2);
}

TEST_CASE("conservation holds at every tick of a controlled run") {
    Grid g{2, 2};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows = load_flows(uniform_flows(g, net, 4.0), net);
    ControllerSet controllers = all_of(net, "MaxPressure");
    RunOptions opts;
    opts.duration_s = 600;
    int checked = 0;
    opts.on_tick = [&](const SimState& s) {
        REQUIRE(conservation_holds(s));
        ++checked;
    };
    run(net, cfg, flows, controllers, opts);
    CHECK(checked == 600);
}

TEST_CASE("trace-derived ATT/AWT equal the engine-accumulated report exactly") {
    Grid g{2, 2};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows = load_flows(uniform_flows(g, net, 5.0), net);
    ControllerSet controllers = all_of(net, "MaxPressure");
    RunOptions opts;
    opts.duration_s = 900;
    RunResult res = run(net, cfg, flows, controllers, opts);
    auto rows = vehicle_rows_from_trace(res.trace.lines);
    REQUIRE_FALSE(rows.empty());
    CHECK(compute_att(rows, opts.duration_s) == res.metrics.att);
    CHECK(compute_awt(rows) == res.metrics.awt);
    CHECK(rows.size() == res.metrics.vehicles_entered);
}

TEST_CASE("max pressure beats fixed time on a loaded grid") {
    Grid g{3, 3};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows = load_flows(uniform_flows(g, net, 5.0), net);
    RunOptions opts;
    opts.duration_s = 1200;
    ControllerSet fixed = all_of(net, "FixedTime");
    ControllerSet pressure = all_of(net, "MaxPressure");
    double att_fixed = run(net, cfg, flows, fixed, opts).metrics.att;
    double att_pressure = run(net, cfg, flows, pressure, opts).metrics.att;
    CHECK(att_pressure < att_fixed);
}

TEST_CASE("controller failure propagates intersection and time") {
    struct Broken : Controller {
        Decision decide(const DecisionContext&) override { throw std::runtime_error("boom"); }
        const char* name() const override { return "Broken"; }
    };
    Grid g{1, 1};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows;
    ControllerSet controllers;
    controllers[net.controlled().front()] = ControllerBinding{std::make_unique<Broken>(), 0.5, 5};
    RunOptions opts;
    opts.duration_s = 60;
    try {
        run(net, cfg, flows, controllers, opts);
        FAIL("expected SimulationError");
    } catch (const SimulationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("i_1_1") != std::string::npos);
        CHECK(msg.find("t=0") != std::string::npos);
        CHECK(msg.find("boom") != std::string::npos);
    }
}

TEST_CASE("decision trace carries tier, n_c and a stable observation digest") {
    Grid g{2, 1};
    RoadNetwork net = g.network();
    SimConfig cfg;
    Json flows_doc = Json::array(
        {flow_entry(route_from_roads(net, g.ew_roads(1)), 0, 3600, 3.0)});
    FlowSpec flows = load_flows(flows_doc, net);
    ControllerSet controllers = all_of(net, "ComplexityAware");
    RunOptions opts;
    opts.duration_s = 300;
    RunResult res = run(net, cfg, flows, controllers, opts);
    bool saw_decision = false;
    for (const Json& line : res.trace.lines) {
        if (line["type"] != "decision") continue;
        saw_decision = true;
        CHECK(line.contains("tier"));
        CHECK(line["n_c"].is_number_integer());
        CHECK(line["obs_digest"].get<std::string>().size() == 16);
    }
    CHECK(saw_decision);
    CHECK(res.timing["decisions"].get<int>() > 0);
}

TEST_CASE("datagen emits schema-valid, golden-consistent records") {
    Grid g{2, 1};
    RoadNetwork net = g.network();
    SimConfig cfg;
    Json flows_doc = Json::array(
        {flow_entry(route_from_roads(net, g.ew_roads(1)), 0, 3600, 2.5),
         flow_entry(route_from_roads(net, g.ew_roads(1, false)), 0, 3600, 2.5),
         flow_entry(route_from_roads(net, g.ns_roads(1)), 0, 3600, 6.0)});
    FlowSpec flows = load_flows(flows_doc, net);
    ControllerSet controllers = all_of(net, "ComplexityAware");
    DatagenOptions opts;
    opts.run.duration_s = 400;
    DatagenResult res = run_datagen(net, cfg, flows, controllers, opts);
    REQUIRE_FALSE(res.records.empty());
    for (const ReasoningRecord& r : res.records) {
        REQUIRE_NOTHROW(validate_record(r));
        REQUIRE(r.chosen_action.has_value());
    }
    CHECK(res.summary["records"] == res.records.size());
    std::int64_t tier_total = 0;
    for (const auto& [k, v] : res.summary["tier_histogram"].items())
        tier_total += v.get<std::int64_t>();
    CHECK(tier_total == static_cast<std::int64_t>(res.records.size()));

    SECTION("max_records caps synthesis but not the episode") {
        ControllerSet again = all_of(net, "ComplexityAware");
        DatagenOptions capped = opts;
        capped.max_records = 3;
        DatagenResult small = run_datagen(net, cfg, flows, again, capped);
        CHECK(small.records.size() == 3);
        CHECK(small.metrics.vehicles_entered > 0);
    }
}

TEST_CASE("datagen corpus is byte-stable across identical runs") {
    auto once = [] {
        Grid g{2, 1};
        RoadNetwork net = g.network();
        SimConfig cfg;
        cfg.seed = 5;
        Json flows_doc = Json::array(
            {flow_entry(route_from_roads(net, g.ew_roads(1)), 0, 3600, 3.0)});
        FlowSpec flows = load_flows(flows_doc, net);
        ControllerSet controllers = all_of(net, "ComplexityAware");
        DatagenOptions opts;
        opts.run.duration_s = 300;
        DatagenResult res = run_datagen(net, cfg, flows, controllers, opts);
        std::string out;
        for (const ReasoningRecord& r : res.records) out += record_to_json(r).dump() + "\n";
        return out;
    };
    CHECK(once() == once());
}

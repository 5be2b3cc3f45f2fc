#include <gridlight/gridgen.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace gridlight;
namespace fs = std::filesystem;

// Regenerates the benchmark scenarios shipped under scenarios/. Output is
// deterministic; rerunning must not change committed files.
namespace {

void write_json(const fs::path& path, const Json& j) {
    fs::create_directories(path.parent_path());
    write_file(path.string(), j.dump(2) + "\n");
}

void write_controllers(const fs::path& dir) {
    write_json(dir / "fixed_time.json", {{"*", {{"kind", "FixedTime"}}}});
    write_json(dir / "max_pressure.json", {{"*", {{"kind", "MaxPressure"}}}});
    write_json(dir / "complexity_aware.json", {{"*", {{"kind", "ComplexityAware"}}}});
    write_json(dir / "llm.json", {{"*", {{"kind", "Llm"}, {"fallback", "MaxPressure"}}}});
}

Json run_config(const std::string& flow_file, const std::string& controllers_file) {
    return {{"roadnet", "roadnet.json"}, {"flow", flow_file},
            {"controllers", controllers_file}, {"duration_s", 3600},
            {"seed", 7},                 {"alpha", 0.5},
            {"delta_t", 5}};
}

void make_toy(const fs::path& dir) {
    Grid g{1, 1};
    RoadNetwork net = g.network();
    write_json(dir / "roadnet.json", g.roadnet());
    Json flows = Json::array();
    flows.push_back(flow_entry(route_from_roads(net, g.ew_roads(1)), 0, 3600, 12));
    flows.push_back(flow_entry(route_from_roads(net, g.ew_roads(1, false)), 0, 3600, 15));
    flows.push_back(flow_entry(route_from_roads(net, g.ns_roads(1)), 0, 3600, 20));
    flows.push_back(flow_entry(route_from_roads(net, g.ns_roads(1, false)), 0, 3600, 20));
    write_json(dir / "flow.json", flows);
    write_json(dir / "run.json", run_config("flow.json", "controllers/max_pressure.json"));
    write_json(dir / "meta.json",
               {{"description", "single controlled intersection fed from four boundary nodes"}});
    write_controllers(dir / "controllers");
}

void make_grid3x3(const fs::path& dir) {
    Grid g{3, 3};
    RoadNetwork net = g.network();
    write_json(dir / "roadnet.json", g.roadnet());

    // Uniform load, ~1000 veh/h over 12 straight routes.
    Json uniform = Json::array();
    for (int r = 1; r <= 3; ++r) {
        uniform.push_back(flow_entry(route_from_roads(net, g.ew_roads(r)), 0, 3600, 43.2));
        uniform.push_back(flow_entry(route_from_roads(net, g.ew_roads(r, false)), 0, 3600, 43.2));
    }
    for (int c = 1; c <= 3; ++c) {
        uniform.push_back(flow_entry(route_from_roads(net, g.ns_roads(c)), 0, 3600, 43.2));
        uniform.push_back(flow_entry(route_from_roads(net, g.ns_roads(c, false)), 0, 3600, 43.2));
    }
    write_json(dir / "flow_uniform1000.json", uniform);

    // Congested benchmark: a dominant middle corridor, moderate crossing
    // streams, and four left-turn routes so every phase carries demand.
    Json congested = Json::array();
    congested.push_back(flow_entry(route_from_roads(net, g.ew_roads(2)), 0, 3600, 8));
    congested.push_back(flow_entry(route_from_roads(net, g.ew_roads(2, false)), 0, 3600, 8));
    for (int r : {1, 3}) {
        congested.push_back(flow_entry(route_from_roads(net, g.ew_roads(r)), 0, 3600, 24));
        congested.push_back(flow_entry(route_from_roads(net, g.ew_roads(r, false)), 0, 3600, 24));
    }
    for (int c = 1; c <= 3; ++c) {
        congested.push_back(flow_entry(route_from_roads(net, g.ns_roads(c)), 0, 3600, 30));
        congested.push_back(flow_entry(route_from_roads(net, g.ns_roads(c, false)), 0, 3600, 30));
    }
    congested.push_back(flow_entry(
        route_from_roads(net, g.path_roads({{0, 1}, {1, 1}, {2, 1}, {2, 2}, {2, 3}, {2, 4}})), 0,
        3600, 45));
    congested.push_back(flow_entry(
        route_from_roads(net, g.path_roads({{4, 3}, {3, 3}, {2, 3}, {2, 2}, {2, 1}, {2, 0}})), 0,
        3600, 45));
    congested.push_back(flow_entry(
        route_from_roads(net, g.path_roads({{3, 0}, {3, 1}, {3, 2}, {2, 2}, {1, 2}, {0, 2}})), 0,
        3600, 45));
    congested.push_back(flow_entry(
        route_from_roads(net, g.path_roads({{1, 4}, {1, 3}, {1, 2}, {2, 2}, {3, 2}, {4, 2}})), 0,
        3600, 45));
    write_json(dir / "flow_congested.json", congested);

    write_json(dir / "run.json", run_config("flow_congested.json", "controllers/max_pressure.json"));
    write_json(dir / "run_uniform.json",
               run_config("flow_uniform1000.json", "controllers/max_pressure.json"));
    write_json(dir / "meta.json",
               {{"description",
                 "3x3 benchmark; flow_congested.json oversaturates the middle corridor, "
                 "flow_uniform1000.json spreads ~1000 veh/h evenly"}});
    write_controllers(dir / "controllers");
}

void make_grid2x2(const fs::path& dir) {
    Grid g{2, 2};
    RoadNetwork net = g.network();
    write_json(dir / "roadnet.json", g.roadnet());

    // Spillback-prone: the row-1 eastbound corridor competes at i_2_1 with a
    // heavy northbound stream, so the i_1_1 -> i_2_1 link runs near-full and
    // west-approach greens at i_1_1 go to waste unless the agents cooperate.
    Json flows = Json::array();
    flows.push_back(flow_entry(route_from_roads(net, g.ew_roads(1)), 0, 3600, 4.5));
    flows.push_back(flow_entry(
        route_from_roads(net, g.path_roads({{0, 1}, {1, 1}, {2, 1}, {2, 2}, {2, 3}})), 0, 3600,
        15));
    flows.push_back(flow_entry(route_from_roads(net, g.ns_roads(2)), 0, 3600, 5.5));
    flows.push_back(flow_entry(route_from_roads(net, g.ns_roads(2, false)), 0, 3600, 18));
    flows.push_back(flow_entry(route_from_roads(net, g.ew_roads(1, false)), 0, 3600, 30));
    flows.push_back(flow_entry(route_from_roads(net, g.ew_roads(2)), 0, 3600, 30));
    flows.push_back(flow_entry(route_from_roads(net, g.ew_roads(2, false)), 0, 3600, 30));
    flows.push_back(flow_entry(route_from_roads(net, g.ns_roads(1)), 0, 3600, 24));
    flows.push_back(flow_entry(route_from_roads(net, g.ns_roads(1, false)), 0, 3600, 24));
    flows.push_back(flow_entry(
        route_from_roads(net, g.path_roads({{0, 1}, {1, 1}, {1, 2}, {1, 3}})), 0, 3600, 40));
    write_json(dir / "flow_spillback.json", flows);

    write_json(dir / "run.json", run_config("flow_spillback.json", "controllers/max_pressure.json"));
    write_json(dir / "meta.json",
               {{"description",
                 "2x2 spillback benchmark; the west approach of i_1_1 feeds a link that "
                 "fills whenever i_2_1 serves its northbound stream"},
                {"critical_approach", {"road_v_0_1__i_1_1_0"}}});
    write_controllers(dir / "controllers");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"regenerate the shipped benchmark scenarios"};
    std::string out = "scenarios";
    app.add_option("--out", out, "output directory");
    CLI11_PARSE(app, argc, argv);
    try {
        make_toy(fs::path(out) / "toy1x1");
        make_grid3x3(fs::path(out) / "grid3x3");
        make_grid2x2(fs::path(out) / "grid2x2");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    std::cout << "scenarios written under " << out << std::endl;
    return 0;
}

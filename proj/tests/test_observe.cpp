#include <catch_amalgamated.hpp>

#include <gridlight/gridgen.hpp>
#include <gridlight/observe.hpp>

#include <random>

using namespace gridlight;

namespace {

void plant(SimState& state, const RoadNetwork& net, const std::string& lane_id, int queued,
           int moving, int join_offset = 0) {
    LaneIdx l = net.lane_index(lane_id);
    for (int k = 0; k < queued; ++k) {
        Vehicle v;
        v.id = static_cast<std::uint32_t>(state.vehicles.size());
        v.route = {l};
        v.status = VehicleStatus::Queued;
        v.distance_to_stopline = kSlotLength * k;
        v.queue_join_time = state.clock - join_offset;
        state.lanes[l].queue.push_back(v.id);
        state.vehicles.push_back(std::move(v));
        ++state.injected;
    }
    for (int k = 0; k < moving; ++k) {
        Vehicle v;
        v.id = static_cast<std::uint32_t>(state.vehicles.size());
        v.route = {l};
        v.status = VehicleStatus::Moving;
        v.distance_to_stopline = net.lane(l).length - 10.0 * (k + 1);
        state.lanes[l].moving.push_back(v.id);
        state.vehicles.push_back(std::move(v));
        ++state.injected;
    }
}

}  // namespace

TEST_CASE("observe_lane") {
    Grid g{1, 1};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows;
    SimState state = init_state(net, cfg, flows);
    std::string lane = "road_v_0_1__i_1_1_0";

    SECTION("empty lane") {
        LaneObservation o = observe_lane(state, net, net.lane_index(lane));
        CHECK(o.n_queue == 0);
        CHECK(o.n_move == 0);
        CHECK(o.tau == 0.0);
        CHECK(o.rho == 0.0);
    }
    SECTION("occupancy formula: 10 queued + 2 moving on 300 m") {
        plant(state, net, lane, 10, 2);
        LaneObservation o = observe_lane(state, net, net.lane_index(lane));
        CHECK(o.n_queue == 10);
        CHECK(o.n_move == 2);
        CHECK(o.rho == Catch::Approx(0.30));
    }
    SECTION("rho clamps at capacity") {
        plant(state, net, lane, 40, 0);
        LaneObservation o = observe_lane(state, net, net.lane_index(lane));
        CHECK(o.rho == 1.0);
    }
    SECTION("tau averages time since queue join") {
        state.clock = 100;
        plant(state, net, lane, 1, 0, 30);
        plant(state, net, lane, 1, 0, 10);
        LaneObservation o = observe_lane(state, net, net.lane_index(lane));
        CHECK(o.tau == Catch::Approx(20.0));
    }
}

TEST_CASE("collect: local view complete, neighbors alpha-filtered") {
    Grid g{2, 1};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows;
    SimState state = init_state(net, cfg, flows);
    NodeIdx i = net.node_index("i_1_1");
    // Link lanes between i_1_1 and its single neighbor i_2_1: 6 in total.
    std::string receiver = "road_i_1_1__i_2_1_0";  // i -> j, through
    std::string feeder = "road_i_2_1__i_1_1_0";    // j -> i, through
    plant(state, net, receiver, 24, 0);            // rho 0.6
    plant(state, net, feeder, 12, 0);              // rho 0.3

    SECTION("alpha 0 admits every link lane") {
        auto r = collect(state, net, i, 0.0);
        CHECK(r.obs.neighbor.size() == 6);
        CHECK(congestion_risk(r.obs) == 6);
    }
    SECTION("alpha 0.5 keeps only the congested receiver") {
        auto r = collect(state, net, i, 0.5);
        REQUIRE(r.obs.neighbor.size() == 1);
        CHECK(r.obs.neighbor[0].lane == receiver);
        CHECK(tier_for(congestion_risk(r.obs)) == Tier::Simple);
    }
    SECTION("alpha 0.25 keeps receiver and feeder") {
        auto r = collect(state, net, i, 0.25);
        CHECK(r.obs.neighbor.size() == 2);
        CHECK(tier_for(congestion_risk(r.obs)) == Tier::Complex);
    }
    SECTION("alpha 1.0 keeps only fully saturated lanes") {
        auto r = collect(state, net, i, 1.0);
        CHECK(r.obs.neighbor.empty());
        plant(state, net, receiver, 16, 0);  // now 40/40
        r = collect(state, net, i, 1.0);
        CHECK(r.obs.neighbor.size() == 1);
    }
    SECTION("local view is complete regardless of alpha") {
        auto r = collect(state, net, i, 0.9);
        CHECK(r.obs.local.size() == net.node(i).incoming.size() + net.node(i).outgoing.size());
    }
    SECTION("graph covers the 1-hop neighborhood") {
        auto r = collect(state, net, i, 0.5);
        REQUIRE(r.graph.nodes.size() == 2);
        CHECK(r.graph.nodes[0] == "i_1_1");
        CHECK(r.graph.nodes[1] == "i_2_1");
        CHECK(r.graph.edges.size() == 6);
    }
    SECTION("virtual intersection rejected") {
        REQUIRE_THROWS_AS(collect(state, net, net.node_index("v_0_1"), 0.5), ValidationError);
    }
}

TEST_CASE("threshold filter example: rho {0.3, 0.55, 0.7} at alpha 0.5 keeps 2") {
    Grid g{2, 1};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows;
    SimState state = init_state(net, cfg, flows);
    NodeIdx i = net.node_index("i_1_1");
    plant(state, net, "road_i_1_1__i_2_1_0", 12, 0);  // 0.30
    plant(state, net, "road_i_1_1__i_2_1_1", 22, 0);  // 0.55
    plant(state, net, "road_i_2_1__i_1_1_0", 28, 0);  // 0.70
    auto r = collect(state, net, i, 0.5);
    CHECK(r.obs.neighbor.size() == 2);
}

TEST_CASE("congestion risk tiers") {
    CHECK(tier_for(0) == Tier::NoCoop);
    CHECK(tier_for(1) == Tier::Simple);
    CHECK(tier_for(2) == Tier::Complex);
    CHECK(tier_for(3) == Tier::Complex);
    CHECK(tier_for(17) == Tier::Complex);
}

TEST_CASE("raising alpha never raises n_c, and n_c matches a brute-force recount") {
    Grid g{3, 3};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows;
    std::mt19937 rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        SimState state = init_state(net, cfg, flows);
        // Random lane loads.
        for (const Lane& lane : net.lanes()) {
            if (rng() % 3 == 0)
                plant(state, net, lane.id, static_cast<int>(rng() % 41), 0);
        }
        NodeIdx i = net.controlled()[rng() % net.controlled().size()];
        int prev = std::numeric_limits<int>::max();
        for (double alpha : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
            auto r = collect(state, net, i, alpha);
            int n_c = congestion_risk(r.obs);
            int brute = 0;
            for (LaneIdx l : neighbor_scope_lanes(net, i))
                if (observe_lane(state, net, l).rho >= alpha) ++brute;
            REQUIRE(n_c == brute);
            REQUIRE(n_c <= prev);
            prev = n_c;
        }
    }
}

TEST_CASE("history buffer keeps the last delta_t entries in order") {
    HistoryBuffer buf(5);
    for (int k = 0; k < 9; ++k) {
        HistoryEntry e;
        e.obs.timestamp = k;
        buf.push(std::move(e));
        CHECK(buf.size() == std::min<std::size_t>(k + 1, 5));
    }
    auto view = buf.view(5);
    REQUIRE(view.size() == 5);
    for (int k = 0; k < 5; ++k) CHECK(view[k]->obs.timestamp == 4 + k);
    CHECK(buf.view(2).size() == 2);
    CHECK(buf.view(2)[0]->obs.timestamp == 7);

    HistoryBuffer zero(0);
    zero.push(HistoryEntry{});
    CHECK(zero.size() == 0);
}

TEST_CASE("rho depends only on counts, not vehicle identities") {
    Grid g{1, 1};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows;
    std::string lane = "road_v_0_1__i_1_1_0";
    SimState a = init_state(net, cfg, flows);
    SimState b = init_state(net, cfg, flows);
    plant(a, net, lane, 3, 2);
    plant(b, net, "road_v_2_1__i_1_1_2", 1, 0);  // shift ids in b
    plant(b, net, lane, 3, 2);
    CHECK(observe_lane(a, net, net.lane_index(lane)).rho ==
          observe_lane(b, net, net.lane_index(lane)).rho);
}

TEST_CASE("observation JSON is stable and sorted by side then movement") {
    Grid g{2, 1};
    RoadNetwork net = g.network();
    SimConfig cfg;
    FlowSpec flows;
    SimState state = init_state(net, cfg, flows);
    plant(state, net, "road_v_1_2__i_1_1_0", 7, 1, 12);  // north approach, through
    NodeIdx i = net.node_index("i_1_1");
    Json j1 = obs_to_json(collect(state, net, i, 0.5).obs);
    Json j2 = obs_to_json(collect(state, net, i, 0.5).obs);
    CHECK(j1.dump() == j2.dump());
    // Rows arrive N, E, S, W; incoming before outgoing; through, left, right.
    const auto& rows = j1["local"];
    CHECK(rows[0]["side"] == "N");
    CHECK(rows[0]["dir"] == "in");
    CHECK(rows[0]["movement"] == "through");
    CHECK(rows[1]["movement"] == "left");
    CHECK(rows[2]["movement"] == "right");
    CHECK(rows[0]["tau"] == 12.0);
    CHECK(obs_digest(collect(state, net, i, 0.5).obs) ==
          obs_digest(collect(state, net, i, 0.5).obs));
}

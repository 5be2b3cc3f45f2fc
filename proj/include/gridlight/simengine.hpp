#pragma once

#include <gridlight/network.hpp>

#include <cmath>
#include <deque>
#include <random>
#include <string>
#include <vector>

namespace gridlight {

struct SimConfig {
    int tick = 1;                     // seconds per step
    int green = 30;                   // seconds
    int yellow = 3;                   // seconds
    int all_red = 2;                  // seconds
    double saturation_headway = 2.0;  // seconds per discharged vehicle
    double vehicle_length = 5.0;      // meters
    double min_gap = 2.5;             // meters
    std::uint64_t seed = 0;

    void validate() const {
        if (tick <= 0 || green <= 0 || yellow <= 0 || all_red <= 0)
            throw ValidationError("sim config: all durations must be > 0");
        if (green % tick || yellow % tick || all_red % tick)
            throw ValidationError("sim config: tick must divide green, yellow and all_red");
        if (!(saturation_headway > 0.0))
            throw ValidationError("sim config: saturation_headway must be > 0");
    }

    // Vehicles a single lane can release across one full green.
    int green_discharge_cap() const {
        return static_cast<int>(std::floor(green / saturation_headway));
    }
};

enum class VehicleStatus { Moving, Queued, Finished };

inline const char* to_string(VehicleStatus s) {
    switch (s) {
        case VehicleStatus::Moving: return "moving";
        case VehicleStatus::Queued: return "queued";
        default: return "finished";
    }
}

struct Vehicle {
    std::uint32_t id = 0;
    std::vector<LaneIdx> route;
    std::uint32_t route_pos = 0;
    double distance_to_stopline = 0.0;
    VehicleStatus status = VehicleStatus::Moving;
    int enter_time = 0;
    int exit_time = -1;       // -1 while in network
    int queued_seconds = 0;   // cumulative, across all queues on the route
    int queue_join_time = 0;  // clock when the current queue was joined

    LaneIdx current_lane() const { return route[route_pos]; }
};

struct FlowEntry {
    std::vector<LaneIdx> route;
    double start_time = 0.0;
    double end_time = 0.0;
    double interval = 1.0;  // seconds between spawned vehicles
};

struct FlowSpec {
    std::vector<FlowEntry> entries;
};

// Accepts the documented lane-route schema and, when route elements name
// roads instead of lanes, the CityFlow flow superset (vehicle attributes
// ignored, roads mapped to lanes by turn movement).
inline FlowSpec load_flows(const Json& doc, const RoadNetwork& net) {
    if (!doc.is_array()) throw ValidationError("flow file: expected a JSON array");
    FlowSpec spec;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const Json& j = doc[i];
        FlowEntry e;
        std::vector<std::string> ids = j.at("route").get<std::vector<std::string>>();
        if (ids.empty())
            throw ValidationError("flow[" + std::to_string(i) + "]: empty route");
        if (!net.has_lane(ids.front())) ids = route_from_roads(net, ids);
        for (const auto& id : ids) {
            if (!net.has_lane(id))
                throw ValidationError("flow[" + std::to_string(i) + "]: unknown lane '" + id + "'");
            e.route.push_back(net.lane_index(id));
        }
        for (std::size_t k = 1; k < e.route.size(); ++k)
            if (net.lane(e.route[k - 1]).to != net.lane(e.route[k]).from)
                throw ValidationError("flow[" + std::to_string(i) + "]: lanes '" +
                                      net.lane(e.route[k - 1]).id + "' and '" +
                                      net.lane(e.route[k]).id + "' are not connected");
        e.start_time = j.at("startTime").get<double>();
        e.end_time = j.at("endTime").get<double>();
        if (e.end_time < 0) e.end_time = 1e18;  // CityFlow: -1 means unbounded
        e.interval = j.at("interval").get<double>();
        if (!(e.interval > 0))
            throw ValidationError("flow[" + std::to_string(i) + "]: interval must be > 0");
        spec.entries.push_back(std::move(e));
    }
    return spec;
}

inline FlowSpec load_flows_file(const std::string& path, const RoadNetwork& net) {
    return load_flows(parse_json_file(path), net);
}

enum class SignalStage { Green, Yellow, AllRed };

inline const char* to_string(SignalStage s) {
    switch (s) {
        case SignalStage::Green: return "green";
        case SignalStage::Yellow: return "yellow";
        default: return "all_red";
    }
}

struct SignalState {
    PhaseId active = PhaseId::ETWT;
    PhaseId pending = PhaseId::ETWT;
    SignalStage stage = SignalStage::Green;
    int remaining = 0;  // seconds left in the current stage; 0 in Green = decision due
};

struct LaneRuntime {
    std::deque<std::uint32_t> queue;   // front = at the stopline
    std::deque<std::uint32_t> moving;  // front = closest to the stopline
    double discharge_credit = 0.0;
};

struct PendingInjection {
    std::uint32_t flow = 0;  // index into FlowSpec.entries
    double scheduled = 0.0;
};

// Complete, forkable snapshot. Plain value type: copying it is fork().
struct SimState {
    int clock = 0;
    std::vector<Vehicle> vehicles;
    std::vector<LaneRuntime> lanes;
    std::vector<SignalState> signals;  // indexed by NodeIdx; virtual entries unused
    std::vector<std::uint32_t> flow_cursor;
    std::deque<PendingInjection> pending;
    std::uint64_t injected = 0;
    std::uint64_t finished = 0;
    std::vector<std::int64_t> lane_wait_seconds;     // accumulated queued time per lane
    std::vector<std::int64_t> lane_discharges;       // stopline crossings per lane
    std::mt19937_64 rng;

    bool at_decision_boundary(NodeIdx i) const {
        return signals[i].stage == SignalStage::Green && signals[i].remaining == 0;
    }

    std::uint64_t on_network() const {
        std::uint64_t n = 0;
        for (const auto& l : lanes) n += l.queue.size() + l.moving.size();
        return n;
    }
};

inline SimState init_state(const RoadNetwork& net, const SimConfig& cfg, const FlowSpec& flows) {
    cfg.validate();
    SimState s;
    s.lanes.resize(net.lanes().size());
    s.signals.resize(net.intersections().size());
    s.flow_cursor.assign(flows.entries.size(), 0);
    s.lane_wait_seconds.assign(net.lanes().size(), 0);
    s.lane_discharges.assign(net.lanes().size(), 0);
    s.rng.seed(cfg.seed);
    return s;
}

inline SimState fork(const SimState& state) {
    return state;
}

inline void set_phase(SimState& state, const RoadNetwork& net, const SimConfig& cfg, NodeIdx i,
                      PhaseId p) {
    if (net.node(i).is_virtual)
        throw SimulationError("set_phase: intersection " + net.node(i).id + " is virtual");
    SignalState& sig = state.signals[i];
    if (!(sig.stage == SignalStage::Green && sig.remaining == 0))
        throw SimulationError("set_phase: " + net.node(i).id + " is not at a decision boundary");
    sig.pending = p;
    if (p == sig.active) {
        sig.stage = SignalStage::Green;
        sig.remaining = cfg.green;
    } else {
        sig.stage = SignalStage::Yellow;
        sig.remaining = cfg.yellow;
    }
}

namespace detail {

inline bool lane_allowed_now(const RoadNetwork& net, const SimState& state, LaneIdx l) {
    const Lane& lane = net.lane(l);
    const Intersection& node = net.node(lane.to);
    if (node.is_virtual) return true;  // uncontrolled sink
    const SignalState& sig = state.signals[lane.to];
    if (sig.stage != SignalStage::Green || sig.remaining == 0) return false;
    if (lane.movement == Movement::Right) return true;
    Compass s = net.approach_side(l);
    bool ew = s == Compass::E || s == Compass::W;
    switch (sig.active) {
        case PhaseId::ETWT: return ew && lane.movement == Movement::Through;
        case PhaseId::ELWL: return ew && lane.movement == Movement::Left;
        case PhaseId::NTST: return !ew && lane.movement == Movement::Through;
        default: return !ew && lane.movement == Movement::Left;
    }
}

inline bool try_inject(SimState& state, const RoadNetwork& net, const FlowEntry& flow) {
    LaneIdx entry = flow.route.front();
    LaneRuntime& rt = state.lanes[entry];
    if (rt.queue.size() + rt.moving.size() >=
        static_cast<std::size_t>(net.lane(entry).capacity))
        return false;
    Vehicle v;
    v.id = static_cast<std::uint32_t>(state.vehicles.size());
    v.route = flow.route;
    v.route_pos = 0;
    v.distance_to_stopline = net.lane(entry).length;
    v.status = VehicleStatus::Moving;
    v.enter_time = state.clock;
    rt.moving.push_back(v.id);
    state.vehicles.push_back(std::move(v));
    ++state.injected;
    return true;
}

}  // namespace detail

// One tick of point-queue dynamics: free-flow travel to the back of the
// queue, FIFO discharge at saturation flow, spillback blocking, intergreen
// handling. Every controlled intersection must have remaining stage time;
// expired greens are decision boundaries the caller resolves via set_phase.
inline void step(SimState& state, const RoadNetwork& net, const SimConfig& cfg,
                 const FlowSpec& flows) {
    for (NodeIdx i : net.controlled())
        if (state.at_decision_boundary(i))
            throw SimulationError("step: decision required at " + net.node(i).id + " (t=" +
                                  std::to_string(state.clock) + ")");

    const int T = state.clock + cfg.tick;

    // Waiting time accrues for vehicles queued at the start of the tick.
    for (LaneIdx l = 0; l < state.lanes.size(); ++l) {
        for (std::uint32_t vid : state.lanes[l].queue)
            state.vehicles[vid].queued_seconds += cfg.tick;
        state.lane_wait_seconds[l] +=
            static_cast<std::int64_t>(state.lanes[l].queue.size()) * cfg.tick;
    }

    // Injection: blocked vehicles first, then arrivals due this tick.
    // Arrival times round down to the tick grid; ties spawn in spec order.
    {
        std::deque<PendingInjection> still_blocked;
        for (const PendingInjection& p : state.pending) {
            if (!detail::try_inject(state, net, flows.entries[p.flow]))
                still_blocked.push_back(p);
        }
        state.pending.swap(still_blocked);
    }
    for (std::uint32_t f = 0; f < flows.entries.size(); ++f) {
        const FlowEntry& e = flows.entries[f];
        while (true) {
            double due = e.start_time + static_cast<double>(state.flow_cursor[f]) * e.interval;
            if (due > e.end_time) break;
            int grid = static_cast<int>(std::floor(due / cfg.tick)) * cfg.tick;
            if (grid > state.clock) break;
            if (!detail::try_inject(state, net, e))
                state.pending.push_back({f, due});
            ++state.flow_cursor[f];
        }
    }

    // Free-flow advance; vehicles catching the queue back join it.
    for (LaneIdx l = 0; l < state.lanes.size(); ++l) {
        LaneRuntime& rt = state.lanes[l];
        if (rt.moving.empty()) continue;
        const double speed = net.lane(l).max_speed * cfg.tick;
        double barrier = kSlotLength * static_cast<double>(rt.queue.size());
        std::deque<std::uint32_t> still_moving;
        for (std::uint32_t vid : rt.moving) {
            Vehicle& v = state.vehicles[vid];
            double next = std::max(v.distance_to_stopline - speed, barrier);
            if (next <= barrier + 1e-9) {
                v.distance_to_stopline = kSlotLength * static_cast<double>(rt.queue.size());
                v.status = VehicleStatus::Queued;
                v.queue_join_time = T;
                rt.queue.push_back(vid);
                barrier = kSlotLength * static_cast<double>(rt.queue.size());
            } else {
                v.distance_to_stopline = next;
                still_moving.push_back(vid);
                barrier = next + kSlotLength;
            }
        }
        rt.moving.swap(still_moving);
    }

    // Discharge. Lanes into virtual sinks drain freely; signalled lanes
    // release on a fractional credit that realizes the saturation headway
    // (floor(tick/headway) per tick would deadlock whenever tick < headway).
    const double credit_gain = static_cast<double>(cfg.tick) / cfg.saturation_headway;
    const double credit_cap = std::max(1.0, credit_gain);
    for (LaneIdx l = 0; l < state.lanes.size(); ++l) {
        LaneRuntime& rt = state.lanes[l];
        const bool free_sink = net.node(net.lane(l).to).is_virtual;
        int releases;
        if (free_sink) {
            releases = static_cast<int>(rt.queue.size());
        } else if (detail::lane_allowed_now(net, state, l)) {
            rt.discharge_credit = std::min(rt.discharge_credit + credit_gain, credit_cap);
            releases = static_cast<int>(std::floor(rt.discharge_credit + 1e-9));
        } else {
            rt.discharge_credit = 0.0;
            releases = 0;
        }
        while (releases > 0 && !rt.queue.empty()) {
            Vehicle& v = state.vehicles[rt.queue.front()];
            if (v.route_pos + 1 < v.route.size()) {
                LaneIdx next = v.route[v.route_pos + 1];
                LaneRuntime& nrt = state.lanes[next];
                if (nrt.queue.size() + nrt.moving.size() >=
                    static_cast<std::size_t>(net.lane(next).capacity))
                    break;  // spillback: head of line blocked, lane stalls
                rt.queue.pop_front();
                v.route_pos += 1;
                v.distance_to_stopline = net.lane(next).length;
                v.status = VehicleStatus::Moving;
                nrt.moving.push_back(v.id);
            } else {
                rt.queue.pop_front();
                v.status = VehicleStatus::Finished;
                v.exit_time = T;
                v.distance_to_stopline = 0.0;
                ++state.finished;
            }
            ++state.lane_discharges[l];
            --releases;
            if (!free_sink) rt.discharge_credit -= 1.0;
        }
    }

    state.clock = T;

    // Stage transitions; an expiring green parks at remaining == 0 until the
    // controller answers.
    for (NodeIdx i : net.controlled()) {
        SignalState& sig = state.signals[i];
        sig.remaining -= cfg.tick;
        if (sig.remaining > 0) continue;
        sig.remaining = 0;
        if (sig.stage == SignalStage::Yellow) {
            sig.stage = SignalStage::AllRed;
            sig.remaining = cfg.all_red;
        } else if (sig.stage == SignalStage::AllRed) {
            sig.stage = SignalStage::Green;
            sig.active = sig.pending;
            sig.remaining = cfg.green;
        }
    }
}

inline bool conservation_holds(const SimState& state) {
    return state.injected == state.finished + state.on_network();
}

inline Json state_to_json(const SimState& state, const RoadNetwork& net) {
    Json out;
    out["clock"] = state.clock;
    Json vehicles = Json::array();
    for (const Vehicle& v : state.vehicles) {
        Json route = Json::array();
        for (LaneIdx l : v.route) route.push_back(net.lane(l).id);
        vehicles.push_back({{"id", v.id},
                            {"route", route},
                            {"pos", v.route_pos},
                            {"dist", v.distance_to_stopline},
                            {"status", to_string(v.status)},
                            {"enter", v.enter_time},
                            {"exit", v.exit_time},
                            {"waited", v.queued_seconds},
                            {"join", v.queue_join_time}});
    }
    out["vehicles"] = std::move(vehicles);
    Json lanes = Json::array();
    for (const LaneRuntime& rt : state.lanes) {
        lanes.push_back({{"queue", rt.queue},
                         {"moving", rt.moving},
                         {"credit", rt.discharge_credit}});
    }
    out["lanes"] = std::move(lanes);
    Json signals = Json::array();
    for (NodeIdx i : net.controlled()) {
        const SignalState& sig = state.signals[i];
        signals.push_back({{"intersection", net.node(i).id},
                           {"active", to_string(sig.active)},
                           {"pending", to_string(sig.pending)},
                           {"stage", to_string(sig.stage)},
                           {"remaining", sig.remaining}});
    }
    out["signals"] = std::move(signals);
    out["flow_cursor"] = state.flow_cursor;
    Json pending = Json::array();
    for (const PendingInjection& p : state.pending)
        pending.push_back({{"flow", p.flow}, {"scheduled", p.scheduled}});
    out["pending"] = std::move(pending);
    out["injected"] = state.injected;
    out["finished"] = state.finished;
    out["lane_wait"] = state.lane_wait_seconds;
    out["lane_discharges"] = state.lane_discharges;
    std::ostringstream rng;
    rng << state.rng;
    out["rng"] = rng.str();
    return out;
}

inline SimState state_from_json(const Json& j, const RoadNetwork& net) {
    SimState s;
    s.clock = j.at("clock").get<int>();
    for (const Json& vj : j.at("vehicles")) {
        Vehicle v;
        v.id = vj.at("id").get<std::uint32_t>();
        for (const Json& lid : vj.at("route")) v.route.push_back(net.lane_index(lid));
        v.route_pos = vj.at("pos").get<std::uint32_t>();
        v.distance_to_stopline = vj.at("dist").get<double>();
        std::string st = vj.at("status").get<std::string>();
        v.status = st == "moving"   ? VehicleStatus::Moving
                   : st == "queued" ? VehicleStatus::Queued
                                    : VehicleStatus::Finished;
        v.enter_time = vj.at("enter").get<int>();
        v.exit_time = vj.at("exit").get<int>();
        v.queued_seconds = vj.at("waited").get<int>();
        v.queue_join_time = vj.at("join").get<int>();
        s.vehicles.push_back(std::move(v));
    }
    for (const Json& lj : j.at("lanes")) {
        LaneRuntime rt;
        for (const Json& q : lj.at("queue")) rt.queue.push_back(q.get<std::uint32_t>());
        for (const Json& m : lj.at("moving")) rt.moving.push_back(m.get<std::uint32_t>());
        rt.discharge_credit = lj.at("credit").get<double>();
        s.lanes.push_back(std::move(rt));
    }
    s.signals.resize(net.intersections().size());
    for (const Json& sj : j.at("signals")) {
        SignalState sig;
        sig.active = *phase_from_string(sj.at("active").get<std::string>());
        sig.pending = *phase_from_string(sj.at("pending").get<std::string>());
        std::string st = sj.at("stage").get<std::string>();
        sig.stage = st == "green"    ? SignalStage::Green
                    : st == "yellow" ? SignalStage::Yellow
                                     : SignalStage::AllRed;
        sig.remaining = sj.at("remaining").get<int>();
        s.signals[net.node_index(sj.at("intersection").get<std::string>())] = sig;
    }
    s.flow_cursor = j.at("flow_cursor").get<std::vector<std::uint32_t>>();
    for (const Json& pj : j.at("pending"))
        s.pending.push_back({pj.at("flow").get<std::uint32_t>(), pj.at("scheduled").get<double>()});
    s.injected = j.at("injected").get<std::uint64_t>();
    s.finished = j.at("finished").get<std::uint64_t>();
    s.lane_wait_seconds = j.at("lane_wait").get<std::vector<std::int64_t>>();
    s.lane_discharges = j.at("lane_discharges").get<std::vector<std::int64_t>>();
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> s.rng;
    return s;
}

}  // namespace gridlight

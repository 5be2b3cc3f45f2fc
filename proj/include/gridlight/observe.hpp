#pragma once

#include <gridlight/simengine.hpp>

#include <algorithm>
#include <deque>
#include <string>
#include <tuple>
#include <vector>

namespace gridlight {

struct LaneObservation {
    int n_queue = 0;
    int n_move = 0;
    double tau = 0.0;  // mean current waiting time of queued vehicles, seconds
    double rho = 0.0;  // occupancy, clamped to [0, 1]
};

inline LaneObservation observe_lane(const SimState& state, const RoadNetwork& net, LaneIdx l) {
    const LaneRuntime& rt = state.lanes.at(l);
    LaneObservation o;
    o.n_queue = static_cast<int>(rt.queue.size());
    o.n_move = static_cast<int>(rt.moving.size());
    if (o.n_queue > 0) {
        double total = 0.0;
        for (std::uint32_t vid : rt.queue)
            total += static_cast<double>(state.clock - state.vehicles[vid].queue_join_time);
        o.tau = total / o.n_queue;
    }
    o.rho = std::min(1.0, (o.n_queue + o.n_move) * kSlotLength / net.lane(l).length);
    return o;
}

struct ObsRow {
    std::string lane;
    Compass side = Compass::N;  // approach side for incoming, exit side for outgoing
    bool incoming = true;
    Movement movement = Movement::Through;
    LaneObservation obs;
};

inline bool row_order(const ObsRow& a, const ObsRow& b) {
    return std::tuple(static_cast<int>(a.side), a.incoming ? 0 : 1, static_cast<int>(a.movement),
                      a.lane) < std::tuple(static_cast<int>(b.side), b.incoming ? 0 : 1,
                                           static_cast<int>(b.movement), b.lane);
}

struct ObservationSet {
    int timestamp = 0;
    std::string intersection;
    double alpha = 0.5;
    std::vector<ObsRow> local;     // complete: all incoming + outgoing lanes, sorted
    std::vector<ObsRow> neighbor;  // link lanes to/from neighbors with rho >= alpha

    const ObsRow* find_local(const std::string& lane_id) const {
        for (const auto& r : local)
            if (r.lane == lane_id) return &r;
        return nullptr;
    }
};

// Congestion risk coefficient: the count of critical neighbor lanes, which
// is by construction exactly the alpha-filtered set.
inline int congestion_risk(const ObservationSet& obs) {
    return static_cast<int>(obs.neighbor.size());
}

enum class Tier { NoCoop, Simple, Complex, Baseline };

inline const char* to_string(Tier t) {
    switch (t) {
        case Tier::NoCoop: return "NoCoop";
        case Tier::Simple: return "Simple";
        case Tier::Complex: return "Complex";
        default: return "Baseline";
    }
}

inline Tier tier_for(int n_c) {
    if (n_c == 0) return Tier::NoCoop;
    if (n_c == 1) return Tier::Simple;
    return Tier::Complex;
}

struct GraphEdge {
    std::string lane;
    std::string from;
    std::string to;
    double length = 0.0;
    Movement movement = Movement::Through;
    Compass direction = Compass::N;  // heading from -> to
};

struct SpatioTemporalGraph {
    std::string center;
    std::vector<std::string> nodes;  // center first, then neighbors in N,E,S,W order
    std::vector<GraphEdge> edges;
};

struct HistoryEntry {
    ObservationSet obs;
    // Active phase at the assigned intersection and each neighbor when the
    // decision was taken, in graph node order.
    std::vector<std::pair<std::string, PhaseId>> phases;
};

class HistoryBuffer {
  public:
    explicit HistoryBuffer(std::size_t window = 5) : window_(window) {}

    void push(HistoryEntry e) {
        if (window_ == 0) return;
        entries_.push_back(std::move(e));
        while (entries_.size() > window_) entries_.pop_front();
    }

    std::size_t window() const { return window_; }
    std::size_t size() const { return entries_.size(); }
    const std::deque<HistoryEntry>& entries() const { return entries_; }

    // Oldest-first view of the last `n` entries.
    std::vector<const HistoryEntry*> view(std::size_t n) const {
        std::vector<const HistoryEntry*> out;
        std::size_t take = std::min(n, entries_.size());
        for (std::size_t k = entries_.size() - take; k < entries_.size(); ++k)
            out.push_back(&entries_[k]);
        return out;
    }

  private:
    std::size_t window_;
    std::deque<HistoryEntry> entries_;
};

// Lanes whose occupancy participates in the congestion-risk count: the link
// lanes between the intersection and each non-virtual neighbor, in both
// directions (upstream feeders j->i and downstream receivers i->j).
inline std::vector<LaneIdx> neighbor_scope_lanes(const RoadNetwork& net, NodeIdx i) {
    std::vector<LaneIdx> out;
    for (const NeighborLink& nb : net.neighbors(i)) {
        for (LaneIdx l : nb.lanes_in) out.push_back(l);
        for (LaneIdx l : nb.lanes_out) out.push_back(l);
    }
    return out;
}

namespace detail {

inline ObsRow make_row(const SimState& state, const RoadNetwork& net, LaneIdx l, bool incoming) {
    ObsRow r;
    r.lane = net.lane(l).id;
    r.side = incoming ? net.approach_side(l) : net.exit_side(l);
    r.incoming = incoming;
    r.movement = net.lane(l).movement;
    r.obs = observe_lane(state, net, l);
    return r;
}

}  // namespace detail

struct CollectResult {
    ObservationSet obs;
    SpatioTemporalGraph graph;
    std::vector<const HistoryEntry*> history;  // oldest-first, at most delta_t entries
};

inline CollectResult collect(const SimState& state, const RoadNetwork& net, NodeIdx i,
                             double alpha, const HistoryBuffer* history = nullptr,
                             std::size_t delta_t = 5) {
    if (net.node(i).is_virtual)
        throw ValidationError("collect: " + net.node(i).id + " is virtual");
    CollectResult out;
    ObservationSet& obs = out.obs;
    obs.timestamp = state.clock;
    obs.intersection = net.node(i).id;
    obs.alpha = alpha;
    for (LaneIdx l : net.node(i).incoming) obs.local.push_back(detail::make_row(state, net, l, true));
    for (LaneIdx l : net.node(i).outgoing) obs.local.push_back(detail::make_row(state, net, l, false));
    std::sort(obs.local.begin(), obs.local.end(), row_order);

    auto neighbors = net.neighbors(i);
    for (const NeighborLink& nb : neighbors) {
        for (LaneIdx l : nb.lanes_in) {
            ObsRow r = detail::make_row(state, net, l, true);
            if (r.obs.rho >= alpha) obs.neighbor.push_back(std::move(r));
        }
        for (LaneIdx l : nb.lanes_out) {
            ObsRow r = detail::make_row(state, net, l, false);
            if (r.obs.rho >= alpha) obs.neighbor.push_back(std::move(r));
        }
    }
    std::sort(obs.neighbor.begin(), obs.neighbor.end(), row_order);

    SpatioTemporalGraph& g = out.graph;
    g.center = net.node(i).id;
    g.nodes.push_back(g.center);
    for (const NeighborLink& nb : neighbors) g.nodes.push_back(net.node(nb.node).id);
    for (const NeighborLink& nb : neighbors) {
        auto add_edge = [&](LaneIdx l) {
            const Lane& lane = net.lane(l);
            g.edges.push_back({lane.id, net.node(lane.from).id, net.node(lane.to).id, lane.length,
                               lane.movement, net.exit_side(l)});
        };
        for (LaneIdx l : nb.lanes_in) add_edge(l);
        for (LaneIdx l : nb.lanes_out) add_edge(l);
    }

    if (history) out.history = history->view(delta_t);
    return out;
}

inline double round1(double x) {
    return std::round(x * 10.0) / 10.0;
}

inline Json obs_row_json(const ObsRow& r) {
    return {{"lane", r.lane},
            {"side", to_string(r.side)},
            {"dir", r.incoming ? "in" : "out"},
            {"movement", to_string(r.movement)},
            {"n_queue", r.obs.n_queue},
            {"n_move", r.obs.n_move},
            {"tau", round1(r.obs.tau)},
            {"rho", round2(r.obs.rho)}};
}

// Stable serialized form embedded in prompts and reasoning records.
inline Json obs_to_json(const ObservationSet& obs) {
    Json out;
    out["t"] = obs.timestamp;
    out["intersection"] = obs.intersection;
    out["alpha"] = obs.alpha;
    Json local = Json::array();
    for (const auto& r : obs.local) local.push_back(obs_row_json(r));
    out["local"] = std::move(local);
    Json neighbor = Json::array();
    for (const auto& r : obs.neighbor) neighbor.push_back(obs_row_json(r));
    out["neighbor"] = std::move(neighbor);
    return out;
}

inline std::string obs_digest(const ObservationSet& obs) {
    return digest_hex(obs_to_json(obs).dump());
}

}  // namespace gridlight

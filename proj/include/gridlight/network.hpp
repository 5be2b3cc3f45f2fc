#pragma once

#include <gridlight/common.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

namespace gridlight {

enum class Movement { Through, Left, Right };
enum class PhaseId : int { ETWT = 0, ELWL = 1, NTST = 2, NLSL = 3 };
enum class Compass : int { N = 0, E = 1, S = 2, W = 3 };

inline constexpr std::array<PhaseId, 4> kPhases = {PhaseId::ETWT, PhaseId::ELWL, PhaseId::NTST,
                                                   PhaseId::NLSL};
inline constexpr double kSlotLength = 7.5;  // vehicle length 5 m + minimum gap 2.5 m

inline const char* to_string(Movement m) {
    switch (m) {
        case Movement::Through: return "through";
        case Movement::Left: return "left";
        default: return "right";
    }
}

inline Movement movement_from_string(const std::string& s) {
    if (s == "through" || s == "go_straight") return Movement::Through;
    if (s == "left" || s == "turn_left") return Movement::Left;
    if (s == "right" || s == "turn_right") return Movement::Right;
    throw ValidationError("unknown movement: " + s);
}

inline const char* to_string(PhaseId p) {
    switch (p) {
        case PhaseId::ETWT: return "ETWT";
        case PhaseId::ELWL: return "ELWL";
        case PhaseId::NTST: return "NTST";
        default: return "NLSL";
    }
}

inline std::optional<PhaseId> phase_from_string(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    for (PhaseId p : kPhases)
        if (s == to_string(p)) return p;
    return std::nullopt;
}

inline const char* to_string(Compass c) {
    switch (c) {
        case Compass::N: return "N";
        case Compass::E: return "E";
        case Compass::S: return "S";
        default: return "W";
    }
}

inline Compass opposite(Compass c) {
    switch (c) {
        case Compass::N: return Compass::S;
        case Compass::E: return Compass::W;
        case Compass::S: return Compass::N;
        default: return Compass::E;
    }
}

// Turn directions for right-hand traffic: facing W, left hand points S.
inline Compass left_of(Compass heading) {
    switch (heading) {
        case Compass::N: return Compass::W;
        case Compass::W: return Compass::S;
        case Compass::S: return Compass::E;
        default: return Compass::N;
    }
}

inline Compass right_of(Compass heading) {
    return opposite(left_of(heading));
}

using LaneIdx = std::uint32_t;
using NodeIdx = std::uint32_t;
inline constexpr LaneIdx kNoLane = static_cast<LaneIdx>(-1);

struct Lane {
    std::string id;
    NodeIdx from = 0;
    NodeIdx to = 0;
    double length = 0.0;
    double max_speed = 0.0;
    Movement movement = Movement::Through;
    int capacity = 1;  // floor(length / 7.5), at least 1
    std::uint32_t road = 0;
};

struct Road {
    std::string id;
    NodeIdx from = 0;
    NodeIdx to = 0;
    double length = 0.0;
    double max_speed = 0.0;
    std::vector<LaneIdx> lanes;
};

struct Intersection {
    std::string id;
    double x = 0.0;
    double y = 0.0;
    bool is_virtual = false;
    std::vector<LaneIdx> incoming;  // sorted by (approach side, movement, id)
    std::vector<LaneIdx> outgoing;  // sorted by (exit side, movement, id)
};

struct NeighborLink {
    NodeIdx node;
    std::vector<LaneIdx> lanes_in;   // neighbor -> here
    std::vector<LaneIdx> lanes_out;  // here -> neighbor
};

class RoadNetwork {
  public:
    const std::vector<Intersection>& intersections() const { return nodes_; }
    const std::vector<Lane>& lanes() const { return lanes_; }
    const std::vector<Road>& roads() const { return roads_; }

    const Intersection& node(NodeIdx i) const { return nodes_[i]; }
    const Lane& lane(LaneIdx l) const { return lanes_[l]; }

    NodeIdx node_index(const std::string& id) const {
        auto it = node_by_id_.find(id);
        if (it == node_by_id_.end()) throw ValidationError("unknown intersection: " + id);
        return it->second;
    }
    LaneIdx lane_index(const std::string& id) const {
        auto it = lane_by_id_.find(id);
        if (it == lane_by_id_.end()) throw ValidationError("unknown lane: " + id);
        return it->second;
    }
    bool has_node(const std::string& id) const { return node_by_id_.count(id) > 0; }
    bool has_lane(const std::string& id) const { return lane_by_id_.count(id) > 0; }

    // Side of the neighbor that lane traffic arrives from, seen from lane.to.
    Compass approach_side(LaneIdx l) const { return approach_side_[l]; }
    // Side the lane leaves toward, seen from lane.from.
    Compass exit_side(LaneIdx l) const { return exit_side_[l]; }

    // Controlled intersections in id order; decision loops iterate this.
    const std::vector<NodeIdx>& controlled() const { return controlled_; }

    const std::vector<LaneIdx>& allowed_lanes(NodeIdx i, PhaseId p) const {
        if (nodes_[i].is_virtual)
            throw ValidationError("virtual intersection has no phases: " + nodes_[i].id);
        return allowed_[i][static_cast<int>(p)];
    }

    // Ordered N,E,S,W (then lexicographic for anything off-grid).
    std::vector<NeighborLink> neighbors(NodeIdx i, bool include_virtual = false) const {
        struct Entry {
            int slot;
            std::string id;
            NodeIdx node;
        };
        std::vector<Entry> order;
        std::map<NodeIdx, NeighborLink> links;
        auto touch = [&](NodeIdx j) {
            if (j == i) return;
            if (!include_virtual && nodes_[j].is_virtual) return;
            if (!links.count(j)) {
                int slot = side_of(i, j) ? static_cast<int>(*side_of(i, j)) : 4;
                order.push_back({slot, nodes_[j].id, j});
                links[j] = NeighborLink{j, {}, {}};
            }
        };
        for (LaneIdx l : nodes_[i].incoming) touch(lanes_[l].from);
        for (LaneIdx l : nodes_[i].outgoing) touch(lanes_[l].to);
        for (auto& [j, link] : links) {
            for (LaneIdx l : nodes_[i].incoming)
                if (lanes_[l].from == j) link.lanes_in.push_back(l);
            for (LaneIdx l : nodes_[i].outgoing)
                if (lanes_[l].to == j) link.lanes_out.push_back(l);
        }
        std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
            return a.slot != b.slot ? a.slot < b.slot : a.id < b.id;
        });
        std::vector<NeighborLink> out;
        out.reserve(order.size());
        for (const auto& e : order) out.push_back(std::move(links[e.node]));
        return out;
    }

    // Same-movement lane on the road this lane discharges onto, if the
    // geometry provides one. Used as the downstream proxy for pressure terms.
    LaneIdx downstream_lane(LaneIdx l) const { return downstream_[l]; }

    Json serialize() const {
        Json out;
        out["intersections"] = Json::array();
        for (const auto& n : nodes_) {
            out["intersections"].push_back(
                {{"id", n.id}, {"point", {{"x", n.x}, {"y", n.y}}}, {"virtual", n.is_virtual}});
        }
        out["roads"] = Json::array();
        for (const auto& r : roads_) {
            Json lanes = Json::array();
            for (LaneIdx l : r.lanes) lanes.push_back({{"movement", to_string(lanes_[l].movement)}});
            out["roads"].push_back({{"id", r.id},
                                    {"startIntersection", nodes_[r.from].id},
                                    {"endIntersection", nodes_[r.to].id},
                                    {"length", r.length},
                                    {"maxSpeed", r.max_speed},
                                    {"lanes", lanes}});
        }
        return out;
    }

    static RoadNetwork from_json(const Json& doc) {
        RoadNetwork net;
        net.build(doc);
        return net;
    }

  private:
    friend RoadNetwork load_roadnet(const std::string&);

    std::optional<Compass> side_of(NodeIdx self, NodeIdx other) const {
        double dx = nodes_[other].x - nodes_[self].x;
        double dy = nodes_[other].y - nodes_[self].y;
        if (dx == 0.0 && dy == 0.0) return std::nullopt;
        if (std::abs(dy) >= std::abs(dx)) return dy > 0 ? Compass::N : Compass::S;
        return dx > 0 ? Compass::E : Compass::W;
    }

    void build(const Json& doc) {
        if (!doc.is_object() || !doc.contains("intersections") || !doc.contains("roads"))
            throw ValidationError("roadnet: expected object with 'intersections' and 'roads'");
        for (const auto& j : doc["intersections"]) {
            Intersection n;
            n.id = j.at("id").get<std::string>();
            n.x = j.at("point").at("x").get<double>();
            n.y = j.at("point").at("y").get<double>();
            n.is_virtual = j.value("virtual", false);
            if (node_by_id_.count(n.id))
                throw ValidationError("duplicate intersection id: " + n.id);
            node_by_id_[n.id] = static_cast<NodeIdx>(nodes_.size());
            nodes_.push_back(std::move(n));
        }
        bool cityflow = is_cityflow(doc);
        for (const auto& j : doc["roads"]) {
            Road r;
            r.id = j.at("id").get<std::string>();
            const std::string from = j.at("startIntersection").get<std::string>();
            const std::string to = j.at("endIntersection").get<std::string>();
            if (!node_by_id_.count(from))
                throw ValidationError("road " + r.id + ": dangling startIntersection '" + from + "'");
            if (!node_by_id_.count(to))
                throw ValidationError("road " + r.id + ": dangling endIntersection '" + to + "'");
            r.from = node_by_id_[from];
            r.to = node_by_id_[to];
            if (r.from == r.to)
                throw ValidationError("road " + r.id + ": startIntersection equals endIntersection");
            r.length = road_length(j);
            if (!(r.length > 0.0))
                throw ValidationError("road " + r.id + ": length must be > 0");
            r.max_speed = road_speed(j);
            if (!(r.max_speed > 0.0))
                throw ValidationError("road " + r.id + ": maxSpeed must be > 0");

            std::vector<Movement> movements =
                cityflow ? cityflow_movements(doc, j) : declared_movements(j);
            std::uint32_t road_idx = static_cast<std::uint32_t>(roads_.size());
            for (std::size_t k = 0; k < movements.size(); ++k) {
                Lane lane;
                lane.id = r.id + "_" + std::to_string(k);
                lane.from = r.from;
                lane.to = r.to;
                lane.length = r.length;
                lane.max_speed = r.max_speed;
                lane.movement = movements[k];
                lane.capacity = std::max(1, static_cast<int>(std::floor(r.length / kSlotLength)));
                lane.road = road_idx;
                if (lane_by_id_.count(lane.id))
                    throw ValidationError("duplicate lane id: " + lane.id);
                lane_by_id_[lane.id] = static_cast<LaneIdx>(lanes_.size());
                r.lanes.push_back(static_cast<LaneIdx>(lanes_.size()));
                lanes_.push_back(std::move(lane));
            }
            roads_.push_back(std::move(r));
        }
        index();
        validate();
    }

    static bool is_cityflow(const Json& doc) {
        for (const auto& r : doc["roads"]) {
            if (!r.contains("lanes") || r["lanes"].empty()) return true;
            if (!r["lanes"][0].contains("movement")) return true;
        }
        return false;
    }

    static double road_length(const Json& j) {
        if (j.contains("length")) return j["length"].get<double>();
        if (j.contains("points")) {
            const auto& pts = j["points"];
            double len = 0.0;
            for (std::size_t i = 1; i < pts.size(); ++i) {
                double dx = pts[i].at("x").get<double>() - pts[i - 1].at("x").get<double>();
                double dy = pts[i].at("y").get<double>() - pts[i - 1].at("y").get<double>();
                len += std::hypot(dx, dy);
            }
            return len;
        }
        throw ValidationError("road " + j.value("id", std::string("?")) +
                              ": neither length nor points given");
    }

    static double road_speed(const Json& j) {
        if (j.contains("maxSpeed")) return j["maxSpeed"].get<double>();
        if (j.contains("lanes") && !j["lanes"].empty() && j["lanes"][0].contains("maxSpeed"))
            return j["lanes"][0]["maxSpeed"].get<double>();
        return 10.0;
    }

    static std::vector<Movement> declared_movements(const Json& j) {
        std::vector<Movement> out;
        for (const auto& lane : j.at("lanes"))
            out.push_back(movement_from_string(lane.at("movement").get<std::string>()));
        if (out.empty())
            throw ValidationError("road " + j.value("id", std::string("?")) + ": no lanes");
        return out;
    }

    // CityFlow encodes movements in intersection roadLinks; recover per-lane
    // movement from the laneLinks that start on this road.
    static std::vector<Movement> cityflow_movements(const Json& doc, const Json& road) {
        std::size_t n = road.contains("lanes") && !road["lanes"].empty() ? road["lanes"].size() : 3;
        std::vector<std::optional<Movement>> found(n);
        const std::string road_id = road.at("id").get<std::string>();
        for (const auto& inter : doc["intersections"]) {
            if (!inter.contains("roadLinks")) continue;
            for (const auto& rl : inter["roadLinks"]) {
                if (rl.value("startRoad", std::string()) != road_id) continue;
                Movement m = movement_from_string(rl.at("type").get<std::string>());
                for (const auto& ll : rl.value("laneLinks", Json::array())) {
                    std::size_t k = ll.value("startLaneIndex", 0);
                    if (k < n && !found[k]) found[k] = m;
                }
            }
        }
        std::vector<Movement> out;
        out.reserve(n);
        static const Movement fallback[3] = {Movement::Through, Movement::Left, Movement::Right};
        for (std::size_t k = 0; k < n; ++k)
            out.push_back(found[k] ? *found[k] : fallback[std::min<std::size_t>(k, 2)]);
        return out;
    }

    void index() {
        approach_side_.resize(lanes_.size(), Compass::N);
        exit_side_.resize(lanes_.size(), Compass::N);
        downstream_.resize(lanes_.size(), kNoLane);
        for (LaneIdx l = 0; l < lanes_.size(); ++l) {
            auto in_side = side_of(lanes_[l].to, lanes_[l].from);
            auto out_side = side_of(lanes_[l].from, lanes_[l].to);
            if (!in_side || !out_side)
                throw ValidationError("lane " + lanes_[l].id +
                                      ": endpoints share a position, movement sides are ambiguous");
            approach_side_[l] = *in_side;
            exit_side_[l] = *out_side;
            nodes_[lanes_[l].to].incoming.push_back(l);
            nodes_[lanes_[l].from].outgoing.push_back(l);
        }
        auto mv_rank = [](Movement m) { return static_cast<int>(m); };
        for (auto& n : nodes_) {
            std::sort(n.incoming.begin(), n.incoming.end(), [&](LaneIdx a, LaneIdx b) {
                auto ka = std::tuple(static_cast<int>(approach_side_[a]), mv_rank(lanes_[a].movement),
                                     lanes_[a].id);
                auto kb = std::tuple(static_cast<int>(approach_side_[b]), mv_rank(lanes_[b].movement),
                                     lanes_[b].id);
                return ka < kb;
            });
            std::sort(n.outgoing.begin(), n.outgoing.end(), [&](LaneIdx a, LaneIdx b) {
                auto ka = std::tuple(static_cast<int>(exit_side_[a]), mv_rank(lanes_[a].movement),
                                     lanes_[a].id);
                auto kb = std::tuple(static_cast<int>(exit_side_[b]), mv_rank(lanes_[b].movement),
                                     lanes_[b].id);
                return ka < kb;
            });
        }
        for (NodeIdx i = 0; i < nodes_.size(); ++i)
            if (!nodes_[i].is_virtual) controlled_.push_back(i);
        std::sort(controlled_.begin(), controlled_.end(),
                  [&](NodeIdx a, NodeIdx b) { return nodes_[a].id < nodes_[b].id; });

        // Phase -> allowed incoming lanes. Right turns ride along in every phase.
        allowed_.assign(nodes_.size(), {});
        for (NodeIdx i : controlled_) {
            for (PhaseId p : kPhases) {
                auto& set = allowed_[i][static_cast<int>(p)];
                for (LaneIdx l : nodes_[i].incoming) {
                    if (lanes_[l].movement == Movement::Right) {
                        set.push_back(l);
                        continue;
                    }
                    Compass s = approach_side_[l];
                    bool ew = s == Compass::E || s == Compass::W;
                    bool match = false;
                    switch (p) {
                        case PhaseId::ETWT: match = ew && lanes_[l].movement == Movement::Through; break;
                        case PhaseId::ELWL: match = ew && lanes_[l].movement == Movement::Left; break;
                        case PhaseId::NTST: match = !ew && lanes_[l].movement == Movement::Through; break;
                        case PhaseId::NLSL: match = !ew && lanes_[l].movement == Movement::Left; break;
                    }
                    if (match) set.push_back(l);
                }
            }
        }

        for (LaneIdx l = 0; l < lanes_.size(); ++l) {
            const Lane& lane = lanes_[l];
            if (nodes_[lane.to].is_virtual) continue;
            Compass heading = opposite(approach_side_[l]);
            Compass target;
            switch (lane.movement) {
                case Movement::Through: target = heading; break;
                case Movement::Left: target = left_of(heading); break;
                default: target = right_of(heading); break;
            }
            for (LaneIdx out : nodes_[lane.to].outgoing) {
                if (exit_side_[out] == target && lanes_[out].movement == lane.movement) {
                    downstream_[l] = out;
                    break;
                }
            }
        }
    }

    void validate() const {
        // Connectivity over non-virtual nodes (links traversed both ways).
        if (controlled_.size() > 1) {
            std::set<NodeIdx> seen;
            std::queue<NodeIdx> bfs;
            bfs.push(controlled_.front());
            seen.insert(controlled_.front());
            while (!bfs.empty()) {
                NodeIdx i = bfs.front();
                bfs.pop();
                auto visit = [&](NodeIdx j) {
                    if (!nodes_[j].is_virtual && !seen.count(j)) {
                        seen.insert(j);
                        bfs.push(j);
                    }
                };
                for (LaneIdx l : nodes_[i].incoming) visit(lanes_[l].from);
                for (LaneIdx l : nodes_[i].outgoing) visit(lanes_[l].to);
            }
            if (seen.size() != controlled_.size())
                throw ValidationError("roadnet: non-virtual intersections are not connected");
        }
    }

    std::vector<Intersection> nodes_;
    std::vector<Lane> lanes_;
    std::vector<Road> roads_;
    std::map<std::string, NodeIdx> node_by_id_;
    std::map<std::string, LaneIdx> lane_by_id_;
    std::vector<Compass> approach_side_;
    std::vector<Compass> exit_side_;
    std::vector<LaneIdx> downstream_;
    std::vector<NodeIdx> controlled_;
    std::vector<std::array<std::vector<LaneIdx>, 4>> allowed_;
};

inline RoadNetwork load_roadnet(const std::string& path) {
    return RoadNetwork::from_json(parse_json_file(path));
}

// Expands a road-level route into lane ids, picking each road's lane by the
// turn required to reach the next road. The final road exits on its through
// lane when one exists.
inline std::vector<std::string> route_from_roads(const RoadNetwork& net,
                                                 const std::vector<std::string>& road_ids) {
    if (road_ids.empty()) throw ValidationError("route: empty road list");
    std::vector<const Road*> roads;
    for (const auto& id : road_ids) {
        const Road* found = nullptr;
        for (const auto& r : net.roads())
            if (r.id == id) {
                found = &r;
                break;
            }
        if (!found) throw ValidationError("route: unknown road '" + id + "'");
        if (!roads.empty() && roads.back()->to != found->from)
            throw ValidationError("route: road '" + id + "' does not start where '" +
                                  roads.back()->id + "' ends");
        roads.push_back(found);
    }
    auto lane_with = [&](const Road* r, Movement m) -> const Lane* {
        for (LaneIdx l : r->lanes)
            if (net.lane(l).movement == m) return &net.lane(l);
        return nullptr;
    };
    std::vector<std::string> out;
    for (std::size_t k = 0; k < roads.size(); ++k) {
        Movement needed = Movement::Through;
        if (k + 1 < roads.size()) {
            Compass h = net.exit_side(roads[k]->lanes.front());
            Compass next = net.exit_side(roads[k + 1]->lanes.front());
            if (next == h)
                needed = Movement::Through;
            else if (next == left_of(h))
                needed = Movement::Left;
            else if (next == right_of(h))
                needed = Movement::Right;
            else
                throw ValidationError("route: u-turn from '" + roads[k]->id + "' to '" +
                                      roads[k + 1]->id + "' is not supported");
        }
        const Lane* lane = lane_with(roads[k], needed);
        if (!lane && k + 1 == roads.size()) lane = &net.lane(roads[k]->lanes.front());
        if (!lane)
            throw ValidationError("route: road '" + roads[k]->id + "' has no " +
                                  to_string(needed) + " lane");
        out.push_back(lane->id);
    }
    return out;
}

inline const std::vector<LaneIdx>& phase_allowed_lanes(const RoadNetwork& net, NodeIdx i,
                                                       PhaseId p) {
    return net.allowed_lanes(i, p);
}

}  // namespace gridlight

#pragma once

#include <gridlight/network.hpp>

#include <string>
#include <vector>

namespace gridlight {

// Synthetic rectangular grid: controlled intersections at (1..cols, 1..rows)
// ringed by virtual source/sink nodes, every link carrying one through, one
// left and one right lane in each direction.
struct Grid {
    int cols = 3;
    int rows = 3;
    double len_x = 300.0;
    double len_y = 300.0;
    double speed = 10.0;

    bool on_ring(int c, int r) const { return c == 0 || c == cols + 1 || r == 0 || r == rows + 1; }

    std::string node_id(int c, int r) const {
        const char* prefix = on_ring(c, r) ? "v" : "i";
        return std::string(prefix) + "_" + std::to_string(c) + "_" + std::to_string(r);
    }

    static std::string road_id(const std::string& from, const std::string& to) {
        return "road_" + from + "__" + to;
    }

    std::string road_between(int c1, int r1, int c2, int r2) const {
        return road_id(node_id(c1, r1), node_id(c2, r2));
    }

    Json roadnet() const {
        Json doc;
        doc["intersections"] = Json::array();
        auto add_node = [&](int c, int r) {
            doc["intersections"].push_back({{"id", node_id(c, r)},
                                            {"point", {{"x", c * len_x}, {"y", r * len_y}}},
                                            {"virtual", on_ring(c, r)}});
        };
        for (int r = 1; r <= rows; ++r)
            for (int c = 1; c <= cols; ++c) add_node(c, r);
        for (int r = 1; r <= rows; ++r) {
            add_node(0, r);
            add_node(cols + 1, r);
        }
        for (int c = 1; c <= cols; ++c) {
            add_node(c, 0);
            add_node(c, rows + 1);
        }

        doc["roads"] = Json::array();
        auto add_pair = [&](int c1, int r1, int c2, int r2, double len) {
            static const Json lanes = {{{"movement", "through"}},
                                       {{"movement", "left"}},
                                       {{"movement", "right"}}};
            for (int dir = 0; dir < 2; ++dir) {
                std::string a = dir == 0 ? node_id(c1, r1) : node_id(c2, r2);
                std::string b = dir == 0 ? node_id(c2, r2) : node_id(c1, r1);
                doc["roads"].push_back({{"id", road_id(a, b)},
                                        {"startIntersection", a},
                                        {"endIntersection", b},
                                        {"length", len},
                                        {"maxSpeed", speed},
                                        {"lanes", lanes}});
            }
        };
        for (int r = 1; r <= rows; ++r)
            for (int c = 0; c <= cols; ++c) add_pair(c, r, c + 1, r, len_x);
        for (int c = 1; c <= cols; ++c)
            for (int r = 0; r <= rows; ++r) add_pair(c, r, c, r + 1, len_y);
        return doc;
    }

    RoadNetwork network() const { return RoadNetwork::from_json(roadnet()); }

    // West-to-east corridor through row r (or the reverse).
    std::vector<std::string> ew_roads(int r, bool eastbound = true) const {
        std::vector<std::string> out;
        if (eastbound) {
            for (int c = 0; c <= cols; ++c) out.push_back(road_between(c, r, c + 1, r));
        } else {
            for (int c = cols + 1; c >= 1; --c) out.push_back(road_between(c, r, c - 1, r));
        }
        return out;
    }

    // South-to-north corridor through column c (or the reverse).
    std::vector<std::string> ns_roads(int c, bool northbound = true) const {
        std::vector<std::string> out;
        if (northbound) {
            for (int r = 0; r <= rows; ++r) out.push_back(road_between(c, r, c, r + 1));
        } else {
            for (int r = rows + 1; r >= 1; --r) out.push_back(road_between(c, r, c, r - 1));
        }
        return out;
    }

    // Road list along an explicit (c,r) node path.
    std::vector<std::string> path_roads(const std::vector<std::pair<int, int>>& nodes) const {
        std::vector<std::string> out;
        for (std::size_t k = 1; k < nodes.size(); ++k)
            out.push_back(road_between(nodes[k - 1].first, nodes[k - 1].second, nodes[k].first,
                                       nodes[k].second));
        return out;
    }
};

inline Json flow_entry(const std::vector<std::string>& lane_route, double start, double end,
                       double interval) {
    return {{"route", lane_route}, {"startTime", start}, {"endTime", end}, {"interval", interval}};
}

}  // namespace gridlight

#pragma once

#include <gridlight/network.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace gridlight {

struct MetricsReport {
    std::uint64_t vehicles_entered = 0;
    std::uint64_t vehicles_finished = 0;
    double att = 0.0;  // meaningful only when vehicles_entered > 0
    double awt = 0.0;
    double throughput_per_hour = 0.0;
    std::map<std::string, double> mean_queue;  // per intersection, averaged over ticks
    std::map<std::string, std::int64_t> decisions_per_tier;
    // Per-lane waiting aggregates; drives approach-level comparisons.
    std::map<std::string, Json> lane_wait;
    int duration_s = 0;
    std::uint64_t seed = 0;

    // Deterministic serialization: fixed precision, no wall-clock content.
    Json to_json() const {
        Json j;
        j["duration_s"] = duration_s;
        j["seed"] = seed;
        j["vehicles_entered"] = vehicles_entered;
        j["vehicles_finished"] = vehicles_finished;
        if (vehicles_entered == 0) {
            j["att"] = nullptr;
            j["awt"] = nullptr;
        } else {
            j["att"] = round2(att);
            j["awt"] = round2(awt);
        }
        j["throughput_per_hour"] = round2(throughput_per_hour);
        Json mq;
        for (const auto& [id, q] : mean_queue) mq[id] = round2(q);
        j["mean_queue"] = std::move(mq);
        Json tiers;
        for (const auto& [tier, n] : decisions_per_tier) tiers[tier] = n;
        j["decisions_per_tier"] = std::move(tiers);
        Json lw;
        for (const auto& [id, rec] : lane_wait) lw[id] = rec;
        j["lane_wait"] = std::move(lw);
        return j;
    }
};

struct VehicleTraceRow {
    int enter = 0;
    int exit = -1;  // -1: still in the network when the episode ended
    int waited = 0;
};

// Travel-time mean over the trace's vehicle rows; vehicles still in the
// network contribute duration - enter_time.
inline double compute_att(const std::vector<VehicleTraceRow>& rows, int duration_s) {
    if (rows.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : rows)
        total += r.exit >= 0 ? static_cast<double>(r.exit - r.enter)
                             : static_cast<double>(duration_s - r.enter);
    return total / static_cast<double>(rows.size());
}

// Mean accumulated queueing time per vehicle across all intersections.
inline double compute_awt(const std::vector<VehicleTraceRow>& rows) {
    if (rows.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : rows) total += static_cast<double>(r.waited);
    return total / static_cast<double>(rows.size());
}

inline std::vector<VehicleTraceRow> vehicle_rows_from_trace(const std::vector<Json>& lines) {
    std::vector<VehicleTraceRow> rows;
    for (const Json& j : lines) {
        if (j.value("type", std::string()) != "vehicle") continue;
        VehicleTraceRow r;
        r.enter = j.at("enter").get<int>();
        r.exit = j.at("exit").is_null() ? -1 : j.at("exit").get<int>();
        r.waited = j.at("waited").get<int>();
        rows.push_back(r);
    }
    return rows;
}

struct IciReport {
    std::map<std::string, double> per_intersection;
    double max = 0.0, q3 = 0.0, std_dev = 0.0, mean = 0.0, min = 0.0;

    Json to_json() const {
        Json j;
        Json per;
        for (const auto& [id, v] : per_intersection) per[id] = round2(v);
        j["per_intersection"] = std::move(per);
        j["summary"] = {{"max", round2(max)},
                        {"q3", round2(q3)},
                        {"std", round2(std_dev)},
                        {"mean", round2(mean)},
                        {"min", round2(min)}};
        return j;
    }
};

// Upper quartile with linear interpolation between order statistics.
inline double quantile75(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double pos = 0.75 * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

// Intersection Connectivity Index: for every neighbor j of i, the mean
// number of vehicles crossing the i<->j link per window (both directions)
// times v over the link length, summed over neighbors.
inline IciReport compute_ici(const RoadNetwork& net,
                             const std::map<std::string, std::int64_t>& lane_crossings,
                             double v, int duration_s, int window_s = 30) {
    if (duration_s <= 0) throw ValidationError("ici: duration must be > 0");
    const double windows = static_cast<double>(duration_s) / static_cast<double>(window_s);
    IciReport report;
    std::vector<double> values;
    for (NodeIdx i : net.controlled()) {
        double ici = 0.0;
        for (const NeighborLink& nb : net.neighbors(i)) {
            double crossings = 0.0;
            double length_sum = 0.0;
            int lanes_counted = 0;
            auto tally = [&](LaneIdx l) {
                auto it = lane_crossings.find(net.lane(l).id);
                if (it != lane_crossings.end()) crossings += static_cast<double>(it->second);
                length_sum += net.lane(l).length;
                ++lanes_counted;
            };
            for (LaneIdx l : nb.lanes_in) tally(l);
            for (LaneIdx l : nb.lanes_out) tally(l);
            if (lanes_counted == 0) continue;
            double d_ij = length_sum / static_cast<double>(lanes_counted);
            double n_ij = crossings / windows;
            ici += n_ij * v / d_ij;
        }
        report.per_intersection[net.node(i).id] = ici;
        values.push_back(ici);
    }
    if (!values.empty()) {
        report.max = *std::max_element(values.begin(), values.end());
        report.min = *std::min_element(values.begin(), values.end());
        double sum = 0.0;
        for (double x : values) sum += x;
        report.mean = sum / static_cast<double>(values.size());
        double var = 0.0;
        for (double x : values) var += (x - report.mean) * (x - report.mean);
        report.std_dev = std::sqrt(var / static_cast<double>(values.size()));
        report.q3 = quantile75(values);
    }
    return report;
}

}  // namespace gridlight

#pragma once

#include <gridlight/gridgen.hpp>
#include <gridlight/observe.hpp>

// Shared fixture plumbing for the test suites.
namespace glt {

using namespace gridlight;

inline void plant_queue(SimState& state, const RoadNetwork& net, const std::string& lane_id,
                        int count, int join_offset = 0,
                        const std::vector<std::string>& rest_of_route = {}) {
    LaneIdx l = net.lane_index(lane_id);
    for (int k = 0; k < count; ++k) {
        Vehicle v;
        v.id = static_cast<std::uint32_t>(state.vehicles.size());
        v.route.push_back(l);
        for (const auto& id : rest_of_route) v.route.push_back(net.lane_index(id));
        v.route_pos = 0;
        v.distance_to_stopline = kSlotLength * static_cast<double>(state.lanes[l].queue.size());
        v.status = VehicleStatus::Queued;
        v.enter_time = state.clock;
        v.queue_join_time = state.clock - join_offset;
        state.lanes[l].queue.push_back(v.id);
        state.vehicles.push_back(std::move(v));
        ++state.injected;
    }
}

inline void plant_moving(SimState& state, const RoadNetwork& net, const std::string& lane_id,
                         int count) {
    LaneIdx l = net.lane_index(lane_id);
    for (int k = 0; k < count; ++k) {
        Vehicle v;
        v.id = static_cast<std::uint32_t>(state.vehicles.size());
        v.route = {l};
        v.status = VehicleStatus::Moving;
        v.distance_to_stopline =
            net.lane(l).length - 10.0 * static_cast<double>(state.lanes[l].moving.size() + 1);
        state.lanes[l].moving.push_back(v.id);
        state.vehicles.push_back(std::move(v));
        ++state.injected;
    }
}

}  // namespace glt

#pragma once

#include <gridlight/metrics.hpp>
#include <gridlight/oracle.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace gridlight {

struct EpisodeTrace {
    std::vector<Json> lines;  // decision records, vehicle records, one summary

    std::string to_jsonl() const {
        std::string out;
        for (const Json& j : lines) {
            out += j.dump();
            out += '\n';
        }
        return out;
    }
};

inline std::vector<Json> parse_jsonl(const std::string& text, const std::string& origin) {
    std::vector<Json> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        out.push_back(parse_json_text(line, origin + " line " + std::to_string(lineno)));
    }
    return out;
}

struct ControllerBinding {
    std::unique_ptr<Controller> controller;
    double alpha = 0.5;
    std::size_t delta_t = 5;
};

using ControllerSet = std::map<NodeIdx, ControllerBinding>;

inline ControllerSet build_controllers(const RoadNetwork& net,
                                       const std::map<std::string, ControllerSpec>& assignment,
                                       double default_alpha, std::size_t default_delta_t,
                                       const ChatFn& chat = nullptr) {
    ControllerSet out;
    for (NodeIdx i : net.controlled()) {
        ControllerSpec spec = resolve_assignment(assignment, net.node(i).id);
        ControllerBinding binding;
        binding.controller = make_controller(spec, chat);
        binding.alpha = spec.alpha.value_or(default_alpha);
        binding.delta_t =
            spec.delta_t ? static_cast<std::size_t>(*spec.delta_t) : default_delta_t;
        out[i] = std::move(binding);
    }
    return out;
}

struct DecisionEvent {
    NodeIdx node;
    const SimState& state;  // at the decision boundary, before set_phase
    const CollectResult& view;
    const Decision& decision;
    int step_index;
    const HistoryBuffer& history;
};

struct RunOptions {
    int duration_s = 3600;
    bool rollout_handles = true;  // give controllers the 1-decision lookahead
    OracleConfig oracle;
    std::function<void(const SimState&)> on_tick;
    std::function<void(const DecisionEvent&)> on_decision;
};

struct RunResult {
    MetricsReport metrics;
    EpisodeTrace trace;
    Json timing;  // wall-clock; kept out of metrics so outputs stay bit-stable
    SimState final_state;
};

// Episode driver: steps the engine, and at every decision boundary collects
// the intersection's observation view, asks its controller, applies the
// phase, and maintains history/trace/metrics. Deterministic given the seed.
inline RunResult run(const RoadNetwork& net, const SimConfig& cfg, const FlowSpec& flows,
                     ControllerSet& controllers, const RunOptions& opts) {
    cfg.validate();
    if (opts.duration_s <= 0 || opts.duration_s % cfg.tick != 0)
        throw ValidationError("run: duration must be a positive multiple of the tick");
    for (NodeIdx i : net.controlled())
        if (!controllers.count(i))
            throw ValidationError("run: no controller bound for " + net.node(i).id);

    SimState state = init_state(net, cfg, flows);
    std::map<NodeIdx, HistoryBuffer> histories;
    std::map<NodeIdx, int> step_index;
    for (NodeIdx i : net.controlled()) {
        histories.emplace(i, HistoryBuffer(controllers.at(i).delta_t));
        step_index[i] = 0;
    }

    RunResult result;
    std::map<std::string, std::int64_t> tier_counts;
    std::map<std::string, double> wall_ms;
    std::map<NodeIdx, std::int64_t> queue_ticks;
    std::int64_t total_decisions = 0;

    const auto neighbor_cache = [&] {
        std::map<NodeIdx, std::vector<NeighborLink>> m;
        for (NodeIdx i : net.controlled()) m[i] = net.neighbors(i);
        return m;
    }();

    while (state.clock < opts.duration_s) {
        for (NodeIdx i : net.controlled()) {
            if (!state.at_decision_boundary(i)) continue;
            ControllerBinding& binding = controllers.at(i);
            CollectResult view =
                collect(state, net, i, binding.alpha, &histories.at(i), binding.delta_t);
            DecisionContext ctx{view.obs,    view.graph, view.history, net,
                                cfg,         i,          step_index[i], nullptr};
            if (opts.rollout_handles) {
                OracleConfig oc = opts.oracle;
                oc.horizon = 1;
                ctx.rollout_queue = [&state, &net, &cfg, &flows, i, oc](PhaseId p) {
                    return rollout(state, net, cfg, flows, i, p, oc).total_queue;
                };
            }
            Decision d;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                d = binding.controller->decide(ctx);
            } catch (const std::exception& e) {
                throw SimulationError("controller failed at " + net.node(i).id + " (t=" +
                                      std::to_string(state.clock) + "): " + e.what());
            }
            d.latency_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
            if (opts.on_decision) {
                DecisionEvent ev{i, state, view, d, step_index[i], histories.at(i)};
                opts.on_decision(ev);
            }
            set_phase(state, net, cfg, i, d.phase);

            result.trace.lines.push_back({{"type", "decision"},
                                          {"t", state.clock},
                                          {"intersection", net.node(i).id},
                                          {"phase", to_string(d.phase)},
                                          {"tier", to_string(d.tier)},
                                          {"n_c", congestion_risk(view.obs)},
                                          {"obs_digest", obs_digest(view.obs)}});
            HistoryEntry he;
            he.obs = view.obs;
            he.phases.emplace_back(net.node(i).id, d.phase);
            for (const NeighborLink& nb : neighbor_cache.at(i))
                he.phases.emplace_back(net.node(nb.node).id, state.signals[nb.node].active);
            histories.at(i).push(std::move(he));

            ++step_index[i];
            ++total_decisions;
            ++tier_counts[to_string(d.tier)];
            wall_ms[binding.controller->name()] += d.latency_ms;
        }
        step(state, net, cfg, flows);
        if (opts.on_tick) opts.on_tick(state);
        for (NodeIdx i : net.controlled()) {
            std::int64_t q = 0;
            for (LaneIdx l : net.node(i).incoming)
                q += static_cast<std::int64_t>(state.lanes[l].queue.size());
            queue_ticks[i] += q;
        }
    }

    MetricsReport& m = result.metrics;
    m.duration_s = opts.duration_s;
    m.seed = cfg.seed;
    m.vehicles_entered = state.injected;
    m.vehicles_finished = state.finished;
    if (!state.vehicles.empty()) {
        double travel = 0.0, wait = 0.0;
        for (const Vehicle& v : state.vehicles) {
            travel += v.exit_time >= 0 ? static_cast<double>(v.exit_time - v.enter_time)
                                       : static_cast<double>(opts.duration_s - v.enter_time);
            wait += static_cast<double>(v.queued_seconds);
        }
        m.att = travel / static_cast<double>(state.vehicles.size());
        m.awt = wait / static_cast<double>(state.vehicles.size());
    }
    m.throughput_per_hour =
        static_cast<double>(state.finished) * 3600.0 / static_cast<double>(opts.duration_s);
    const std::int64_t ticks = opts.duration_s / cfg.tick;
    for (NodeIdx i : net.controlled())
        m.mean_queue[net.node(i).id] =
            static_cast<double>(queue_ticks[i]) / static_cast<double>(ticks);
    m.decisions_per_tier = tier_counts;
    for (LaneIdx l = 0; l < state.lanes.size(); ++l) {
        if (state.lane_wait_seconds[l] == 0 && state.lane_discharges[l] == 0) continue;
        double mean = state.lane_discharges[l] > 0
                          ? static_cast<double>(state.lane_wait_seconds[l]) /
                                static_cast<double>(state.lane_discharges[l])
                          : static_cast<double>(state.lane_wait_seconds[l]);
        m.lane_wait[net.lane(l).id] = Json{{"total_wait_s", state.lane_wait_seconds[l]},
                                           {"discharged", state.lane_discharges[l]},
                                           {"mean_wait_s", round2(mean)}};
    }

    for (const Vehicle& v : state.vehicles)
        result.trace.lines.push_back({{"type", "vehicle"},
                                      {"id", v.id},
                                      {"enter", v.enter_time},
                                      {"exit", v.exit_time >= 0 ? Json(v.exit_time) : Json()},
                                      {"waited", v.queued_seconds},
                                      {"route_len", v.route.size()}});
    Json crossings;
    for (LaneIdx l = 0; l < state.lanes.size(); ++l)
        if (state.lane_discharges[l] > 0) crossings[net.lane(l).id] = state.lane_discharges[l];
    result.trace.lines.push_back({{"type", "summary"},
                                  {"injected", state.injected},
                                  {"finished", state.finished},
                                  {"lane_discharges", std::move(crossings)}});

    Json per_controller;
    for (const auto& [name, ms] : wall_ms) per_controller[name] = ms;
    result.timing = {{"decisions", total_decisions}, {"per_controller_ms", per_controller}};
    result.final_state = std::move(state);
    return result;
}

inline std::map<std::string, std::int64_t> crossings_from_trace(const std::vector<Json>& lines) {
    for (const Json& j : lines) {
        if (j.value("type", std::string()) != "summary") continue;
        std::map<std::string, std::int64_t> out;
        for (const auto& [lane, n] : j.at("lane_discharges").items())
            out[lane] = n.get<std::int64_t>();
        return out;
    }
    throw ValidationError("trace: no summary record found");
}

struct DatagenOptions {
    RunOptions run;
    std::size_t max_records = static_cast<std::size_t>(-1);
    Summarizer summarizer;  // null: rule-based
    std::string task = kDefaultTaskDescription;
};

struct DatagenResult {
    std::vector<ReasoningRecord> records;
    Json summary;
    MetricsReport metrics;
};

// Runs the episode under the given policy and synthesizes one reasoning
// record per decision, tagging each with the policy's chosen action.
inline DatagenResult run_datagen(const RoadNetwork& net, const SimConfig& cfg,
                                 const FlowSpec& flows, ControllerSet& controllers,
                                 DatagenOptions opts) {
    DatagenResult out;
    std::map<std::string, std::int64_t> tier_hist, golden_hist;
    std::int64_t chosen_matches = 0;
    ControllerSet* bound = &controllers;
    opts.run.on_decision = [&](const DecisionEvent& ev) {
        if (out.records.size() >= opts.max_records) return;
        const ControllerBinding& binding = bound->at(ev.node);
        ReasoningRecord rec =
            synthesize_record(ev.state, net, cfg, flows, ev.node, binding.alpha, &ev.history,
                              binding.delta_t, opts.summarizer, opts.run.oracle, opts.task);
        rec.chosen_action = ev.decision.phase;
        ++tier_hist[to_string(rec.tier)];
        ++golden_hist[to_string(rec.golden_action)];
        if (rec.chosen_action == rec.golden_action) ++chosen_matches;
        out.records.push_back(std::move(rec));
    };
    RunResult run_result = run(net, cfg, flows, controllers, opts.run);
    out.metrics = std::move(run_result.metrics);
    Json tiers, goldens;
    for (const auto& [k, v] : tier_hist) tiers[k] = v;
    for (const auto& [k, v] : golden_hist) goldens[k] = v;
    out.summary = {{"records", out.records.size()},
                   {"tier_histogram", std::move(tiers)},
                   {"golden_histogram", std::move(goldens)},
                   {"chosen_matches_golden", chosen_matches}};
    return out;
}

}  // namespace gridlight

#pragma once

#include <gridlight/llm_client.hpp>
#include <gridlight/runner.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace gridlight {

// One experiment: network, flows, controller assignment, runner knobs.
// Relative paths inside the file resolve against the file's directory.
struct RunConfig {
    RoadNetwork net;
    SimConfig sim;
    FlowSpec flows;
    std::map<std::string, ControllerSpec> assignment;
    double alpha = 0.5;
    std::size_t delta_t = 5;
    int duration_s = 3600;
    OracleConfig oracle;
    std::optional<EndpointConfig> llm;
};

inline OracleConfig oracle_config_from_json(const Json& j) {
    OracleConfig o;
    o.horizon = j.value("horizon", o.horizon);
    if (o.horizon <= 0) throw ValidationError("oracle: horizon must be > 0");
    std::string policy = j.value("neighbor_policy", std::string("max_pressure"));
    if (policy == "max_pressure")
        o.neighbor_policy = NeighborPolicy::MaxPressure;
    else if (policy == "hold_current")
        o.neighbor_policy = NeighborPolicy::HoldCurrent;
    else
        throw ValidationError("oracle: unknown neighbor_policy '" + policy + "'");
    std::string scope = j.value("scope", std::string("neighbors_and_self"));
    if (scope == "neighbors_and_self")
        o.scope = QueueScope::NeighborsAndSelf;
    else if (scope == "neighbors_only")
        o.scope = QueueScope::NeighborsOnly;
    else
        throw ValidationError("oracle: unknown scope '" + scope + "'");
    o.parallel_rollouts = j.value("parallel_rollouts", o.parallel_rollouts);
    return o;
}

inline RunConfig load_run_config(const std::string& path) {
    Json doc = parse_json_file(path);
    std::filesystem::path dir = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (dir / fp).string();
    };

    RunConfig rc;
    rc.net = load_roadnet(resolve(doc.at("roadnet").get<std::string>()));
    rc.flows = load_flows_file(resolve(doc.at("flow").get<std::string>()), rc.net);

    const Json& ctrl = doc.at("controllers");
    if (ctrl.is_string())
        rc.assignment = parse_assignment(parse_json_file(resolve(ctrl.get<std::string>())));
    else
        rc.assignment = parse_assignment(ctrl);

    rc.duration_s = doc.value("duration_s", rc.duration_s);
    rc.alpha = doc.value("alpha", rc.alpha);
    if (rc.alpha < 0.0 || rc.alpha > 1.0)
        throw ValidationError("config: alpha must be within [0, 1]");
    if (doc.contains("delta_t")) {
        int dt = doc["delta_t"].get<int>();
        if (dt < 0) throw ValidationError("config: delta_t must be >= 0");
        rc.delta_t = static_cast<std::size_t>(dt);
    }
    rc.sim.seed = doc.value("seed", rc.sim.seed);
    if (doc.contains("sim")) {
        const Json& s = doc["sim"];
        rc.sim.tick = s.value("tick", rc.sim.tick);
        rc.sim.green = s.value("green", rc.sim.green);
        rc.sim.yellow = s.value("yellow", rc.sim.yellow);
        rc.sim.all_red = s.value("all_red", rc.sim.all_red);
        rc.sim.saturation_headway = s.value("saturation_headway", rc.sim.saturation_headway);
    }
    rc.sim.validate();
    if (doc.contains("oracle")) rc.oracle = oracle_config_from_json(doc["oracle"]);
    if (doc.contains("llm")) rc.llm = EndpointConfig::from_json(doc["llm"]);
    return rc;
}

// Chat hook for Llm controllers; optional JSONL transcript when logging.
inline ChatFn make_chat_fn(const EndpointConfig& ep, const std::string& log_path = "") {
    if (log_path.empty())
        return [ep](const PromptBundle& b) { return chat_complete(ep, b); };
    auto log = std::make_shared<std::ofstream>(log_path, std::ios::app);
    return [ep, log](const PromptBundle& b) {
        return chat_complete(ep, b, [log](const Json& req, const Json& res) {
            (*log) << Json{{"request", req}, {"response", res}}.dump() << "\n";
            log->flush();
        });
    };
}

struct ExecutedRun {
    RunResult result;
    ControllerSet controllers;
};

inline RunResult execute_run(RunConfig& rc, const ChatFn& chat = nullptr,
                             const RunOptions& extra = {}) {
    ChatFn effective_chat = chat;
    if (!effective_chat && rc.llm) effective_chat = make_chat_fn(*rc.llm);
    ControllerSet controllers =
        build_controllers(rc.net, rc.assignment, rc.alpha, rc.delta_t, effective_chat);
    RunOptions opts = extra;
    opts.duration_s = rc.duration_s;
    opts.oracle = rc.oracle;
    return run(rc.net, rc.sim, rc.flows, controllers, opts);
}

inline void write_run_outputs(const RunResult& res, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::filesystem::path dir(out_dir);
    write_file((dir / "metrics.json").string(), res.metrics.to_json().dump(2) + "\n");
    write_file((dir / "trace.jsonl").string(), res.trace.to_jsonl());
    write_file((dir / "timing.json").string(), res.timing.dump(2) + "\n");
}

}  // namespace gridlight

#pragma once

#include <gridlight/control.hpp>

#include <array>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gridlight {

enum class NeighborPolicy { MaxPressure, HoldCurrent };
enum class QueueScope { NeighborsAndSelf, NeighborsOnly };

struct OracleConfig {
    int horizon = 5;  // decision intervals
    NeighborPolicy neighbor_policy = NeighborPolicy::MaxPressure;
    QueueScope scope = QueueScope::NeighborsAndSelf;
    bool parallel_rollouts = true;  // the four per-action forks are independent
};

struct RolloutOutcome {
    PhaseId action = PhaseId::ETWT;
    int horizon = 5;
    long long total_queue = 0;
    double q_value = 1.0;
};

inline double feedback_q(long long total_queue) {
    return 1.0 / (1.0 + static_cast<double>(total_queue));
}

inline double feedback_q(const RolloutOutcome& outcome) {
    return outcome.q_value;
}

// Queue-measurement scope: every incoming lane of the 1-hop neighbors, plus
// the intersection's own incoming lanes unless excluded.
inline std::vector<LaneIdx> queue_scope_lanes(const RoadNetwork& net, NodeIdx i,
                                              QueueScope scope = QueueScope::NeighborsAndSelf) {
    std::vector<LaneIdx> out;
    if (scope == QueueScope::NeighborsAndSelf)
        for (LaneIdx l : net.node(i).incoming) out.push_back(l);
    for (const NeighborLink& nb : net.neighbors(i))
        for (LaneIdx l : net.node(nb.node).incoming) out.push_back(l);
    return out;
}

inline long long total_queue_in_scope(const SimState& state, const RoadNetwork& net, NodeIdx i,
                                      QueueScope scope) {
    long long total = 0;
    for (LaneIdx l : queue_scope_lanes(net, i, scope))
        total += static_cast<long long>(state.lanes[l].queue.size());
    return total;
}

namespace detail {

inline void policy_decide(SimState& s, const RoadNetwork& net, const SimConfig& cfg, NodeIdx j,
                          NeighborPolicy policy) {
    if (policy == NeighborPolicy::HoldCurrent) {
        set_phase(s, net, cfg, j, s.signals[j].active);
        return;
    }
    auto view = collect(s, net, j, 1.0);
    set_phase(s, net, cfg, j, max_pressure_decide(view.obs, net, j).phase);
}

// Forks, forces `action` at i, then lets every intersection (i included)
// follow the neighbor policy until i completes `horizon` green intervals.
inline SimState run_forced(const SimState& state, const RoadNetwork& net, const SimConfig& cfg,
                           const FlowSpec& flows, NodeIdx i, PhaseId action, int horizon,
                           NeighborPolicy policy) {
    if (!state.at_decision_boundary(i))
        throw SimulationError("rollout: " + net.node(i).id + " is not at a decision boundary");
    SimState s = fork(state);
    set_phase(s, net, cfg, i, action);
    int completed = 0;
    while (completed < horizon) {
        for (NodeIdx j : net.controlled())
            if (s.at_decision_boundary(j)) policy_decide(s, net, cfg, j, policy);
        step(s, net, cfg, flows);
        if (s.at_decision_boundary(i)) ++completed;
    }
    return s;
}

}  // namespace detail

inline RolloutOutcome rollout(const SimState& state, const RoadNetwork& net, const SimConfig& cfg,
                              const FlowSpec& flows, NodeIdx i, PhaseId action,
                              const OracleConfig& ocfg = {}) {
    SimState end =
        detail::run_forced(state, net, cfg, flows, i, action, ocfg.horizon, ocfg.neighbor_policy);
    RolloutOutcome out;
    out.action = action;
    out.horizon = ocfg.horizon;
    out.total_queue = total_queue_in_scope(end, net, i, ocfg.scope);
    out.q_value = feedback_q(out.total_queue);
    return out;
}

struct PseudoGolden {
    PhaseId action = PhaseId::ETWT;
    std::array<RolloutOutcome, 4> outcomes;
};

// Exhaustive rollout over the action space; the pseudo-golden signal is the
// argmin of the horizon-end queue total, ties in PhaseId order. The four
// forks share nothing, so they run concurrently; joining in phase order
// keeps the result deterministic.
inline PseudoGolden pseudo_golden(const SimState& state, const RoadNetwork& net,
                                  const SimConfig& cfg, const FlowSpec& flows, NodeIdx i,
                                  const OracleConfig& ocfg = {}) {
    PseudoGolden out;
    if (ocfg.parallel_rollouts) {
        std::array<std::future<RolloutOutcome>, 4> futures;
        for (int k = 0; k < 4; ++k)
            futures[k] = std::async(std::launch::async, [&, k] {
                return rollout(state, net, cfg, flows, i, kPhases[k], ocfg);
            });
        for (int k = 0; k < 4; ++k) out.outcomes[k] = futures[k].get();
    } else {
        for (int k = 0; k < 4; ++k)
            out.outcomes[k] = rollout(state, net, cfg, flows, i, kPhases[k], ocfg);
    }
    long long best = std::numeric_limits<long long>::max();
    for (const RolloutOutcome& o : out.outcomes) {
        if (o.total_queue < best) {
            best = o.total_queue;
            out.action = o.action;
        }
    }
    return out;
}

// Analysis-text source: an LLM endpoint when configured, otherwise the
// deterministic rule-based summarizer below.
using Summarizer = std::function<std::string(const ObservationSet&, const SpatioTemporalGraph&,
                                             const std::vector<const HistoryEntry*>&)>;

inline std::string rule_based_summary(const ObservationSet& obs, const SpatioTemporalGraph&,
                                      const std::vector<const HistoryEntry*>& history) {
    std::string s;
    if (obs.neighbor.empty()) {
        s += "No critical neighbor lanes.";
    } else {
        s += std::to_string(obs.neighbor.size()) + " critical neighbor lane" +
             (obs.neighbor.size() == 1 ? "" : "s") + ":";
        for (std::size_t k = 0; k < obs.neighbor.size(); ++k) {
            const ObsRow& r = obs.neighbor[k];
            s += (k ? ", " : " ") + std::string(to_string(r.side)) +
                 (r.incoming ? " in " : " out ") + to_string(r.movement) + " occ=" +
                 detail::fmt2(r.obs.rho);
        }
        s += ".";
    }
    const ObsRow* dominant = nullptr;
    long long local_total = 0;
    for (const ObsRow& r : obs.local) {
        if (!r.incoming) continue;
        local_total += r.obs.n_queue;
        if (!dominant || r.obs.n_queue > dominant->obs.n_queue) dominant = &r;
    }
    if (dominant && dominant->obs.n_queue > 0)
        s += " Dominant local queue: " + std::string(to_string(dominant->side)) + " in " +
             to_string(dominant->movement) + " with " + std::to_string(dominant->obs.n_queue) +
             " queued.";
    s += " Local queued total " + std::to_string(local_total) + ".";
    if (!history.empty()) {
        long long prev_total = 0;
        for (const ObsRow& r : history.back()->obs.local)
            if (r.incoming) prev_total += r.obs.n_queue;
        long long delta = local_total - prev_total;
        s += " Trend vs previous decision: ";
        s += delta > 0 ? "rising (+" + std::to_string(delta) + ")."
             : delta < 0 ? "falling (" + std::to_string(delta) + ")."
                         : "steady.";
    }
    return s;
}

struct ReasoningRecord {
    int schema_version = 1;
    std::string intersection;
    int timestamp = 0;
    Tier tier = Tier::NoCoop;
    PromptBundle prompt;
    int n_c = 0;
    std::string analysis;
    std::map<PhaseId, Json> future_states;  // simulated next-step observation per action
    PhaseId golden_action = PhaseId::ETWT;
    std::vector<RolloutOutcome> outcomes;  // phase order
    std::optional<PhaseId> chosen_action;  // what the logging policy picked, when known
    std::string target_reply;              // canonical tier-appropriate JSON
};

inline Json record_to_json(const ReasoningRecord& r) {
    Json j;
    j["schema_version"] = r.schema_version;
    j["intersection"] = r.intersection;
    j["t"] = r.timestamp;
    j["tier"] = to_string(r.tier);
    j["n_c"] = r.n_c;
    j["prompt"] = {{"system", r.prompt.system_text},
                   {"user", r.prompt.user_text},
                   {"token_estimate", r.prompt.token_estimate}};
    j["analysis"] = r.analysis;
    Json futures;
    for (PhaseId p : kPhases) {
        auto it = r.future_states.find(p);
        futures[to_string(p)] = it != r.future_states.end() ? it->second : Json();
    }
    j["future_states"] = std::move(futures);
    Json outcomes = Json::array();
    for (const RolloutOutcome& o : r.outcomes)
        outcomes.push_back({{"action", to_string(o.action)},
                            {"horizon", o.horizon},
                            {"total_queue", o.total_queue},
                            {"q_value", o.q_value}});
    j["outcomes"] = std::move(outcomes);
    j["golden_action"] = to_string(r.golden_action);
    j["chosen_action"] = r.chosen_action ? Json(to_string(*r.chosen_action)) : Json();
    j["target_reply"] = r.target_reply;
    return j;
}

inline ReasoningRecord record_from_json(const Json& j) {
    ReasoningRecord r;
    try {
        r.schema_version = j.at("schema_version").get<int>();
        r.intersection = j.at("intersection").get<std::string>();
        r.timestamp = j.at("t").get<int>();
        std::string tier = j.at("tier").get<std::string>();
        r.tier = tier == "NoCoop"   ? Tier::NoCoop
                 : tier == "Simple" ? Tier::Simple
                 : tier == "Complex" ? Tier::Complex
                                     : throw SchemaError("record: bad tier '" + tier + "'");
        r.prompt.system_text = j.at("prompt").at("system").get<std::string>();
        r.prompt.user_text = j.at("prompt").at("user").get<std::string>();
        r.prompt.token_estimate = j.at("prompt").value("token_estimate", 0u);
        r.prompt.tier = r.tier;
        r.n_c = j.at("n_c").get<int>();
        r.analysis = j.at("analysis").get<std::string>();
        for (const auto& [key, value] : j.at("future_states").items()) {
            auto p = phase_from_string(key);
            if (!p) throw SchemaError("record: future_states key '" + key + "'");
            if (!value.is_null()) r.future_states[*p] = value;
        }
        for (const Json& oj : j.at("outcomes")) {
            RolloutOutcome o;
            auto p = phase_from_string(oj.at("action").get<std::string>());
            if (!p) throw SchemaError("record: outcome action");
            o.action = *p;
            o.horizon = oj.at("horizon").get<int>();
            o.total_queue = oj.at("total_queue").get<long long>();
            o.q_value = oj.at("q_value").get<double>();
            r.outcomes.push_back(o);
        }
        auto golden = phase_from_string(j.at("golden_action").get<std::string>());
        if (!golden) throw SchemaError("record: golden_action");
        r.golden_action = *golden;
        if (j.contains("chosen_action") && !j["chosen_action"].is_null()) {
            auto chosen = phase_from_string(j["chosen_action"].get<std::string>());
            if (!chosen) throw SchemaError("record: chosen_action");
            r.chosen_action = *chosen;
        }
        r.target_reply = j.at("target_reply").get<std::string>();
    } catch (const Json::exception& e) {
        throw SchemaError(std::string("record: ") + e.what());
    }
    return r;
}

// Structural + semantic validation of one corpus record. The golden action
// must be the argmin of the record's own outcomes (ties in PhaseId order).
inline void validate_record(const ReasoningRecord& r) {
    if (r.schema_version != 1) throw SchemaError("record: unsupported schema_version");
    if (r.tier != tier_for(r.n_c)) throw SchemaError("record: tier does not match n_c");
    if (r.outcomes.size() != 4) throw SchemaError("record: expected 4 outcomes");
    for (int k = 0; k < 4; ++k) {
        if (r.outcomes[k].action != kPhases[k])
            throw SchemaError("record: outcomes out of phase order");
        if (r.outcomes[k].q_value != feedback_q(r.outcomes[k].total_queue))
            throw SchemaError("record: q_value does not match 1/(1+total_queue)");
    }
    PhaseId argmin = PhaseId::ETWT;
    long long best = std::numeric_limits<long long>::max();
    for (const RolloutOutcome& o : r.outcomes)
        if (o.total_queue < best) {
            best = o.total_queue;
            argmin = o.action;
        }
    if (argmin != r.golden_action)
        throw SchemaError("record: golden_action is not the outcome argmin");
    ParsedReply reply = parse(r.target_reply, r.tier);  // throws on schema breakage
    if (reply.signal != r.golden_action)
        throw SchemaError("record: target_reply signal differs from golden_action");
    if (r.tier == Tier::Complex) {
        for (PhaseId p : kPhases)
            if (!r.future_states.count(p))
                throw SchemaError("record: future_states incomplete for Complex tier");
    }
}

// Builds the full reasoning record for one decision point: observation,
// tier, analysis, simulated per-action future states, horizon rollouts and
// the pseudo-golden target reply.
inline ReasoningRecord synthesize_record(const SimState& state, const RoadNetwork& net,
                                         const SimConfig& cfg, const FlowSpec& flows, NodeIdx i,
                                         double alpha, const HistoryBuffer* history,
                                         std::size_t delta_t, const Summarizer& summarizer = nullptr,
                                         const OracleConfig& ocfg = {},
                                         const std::string& task = kDefaultTaskDescription) {
    if (!state.at_decision_boundary(i))
        throw SimulationError("synthesize_record: not at a decision boundary");
    CollectResult view = collect(state, net, i, alpha, history, delta_t);

    ReasoningRecord r;
    r.intersection = net.node(i).id;
    r.timestamp = state.clock;
    r.n_c = congestion_risk(view.obs);
    r.tier = tier_for(r.n_c);
    r.prompt = render(view.obs, view.graph, view.history, r.tier, task);

    if (r.tier != Tier::NoCoop) {
        if (summarizer) {
            try {
                r.analysis = summarizer(view.obs, view.graph, view.history);
            } catch (const std::exception&) {
                r.analysis = rule_based_summary(view.obs, view.graph, view.history);
            }
        } else {
            r.analysis = rule_based_summary(view.obs, view.graph, view.history);
        }
    }

    for (PhaseId p : kPhases) {
        SimState next = detail::run_forced(state, net, cfg, flows, i, p, 1, ocfg.neighbor_policy);
        r.future_states[p] = obs_to_json(collect(next, net, i, alpha).obs);
    }

    PseudoGolden golden = pseudo_golden(state, net, cfg, flows, i, ocfg);
    r.golden_action = golden.action;
    r.outcomes.assign(golden.outcomes.begin(), golden.outcomes.end());

    ParsedReply target;
    target.signal = r.golden_action;
    if (r.tier != Tier::NoCoop) target.analysis = r.analysis;
    if (r.tier == Tier::Complex) {
        std::map<PhaseId, Json> preds;
        for (PhaseId p : kPhases) {
            long long q = 0;
            for (const Json& row : r.future_states[p]["local"])
                if (row.at("dir") == "in") q += row.at("n_queue").get<long long>();
            preds[p] = Json{{"total_queue", q}};
        }
        target.predictions = std::move(preds);
    }
    r.target_reply = canonical_reply(target, r.tier);
    return r;
}

struct FeedbackLabel {
    std::size_t record_index = 0;
    PhaseId chosen = PhaseId::ETWT;
    std::array<double, 4> q_values{};
    bool kept = false;
};

struct RefineResult {
    std::vector<std::size_t> kept_indices;
    std::vector<FeedbackLabel> labels;
    std::size_t dropped = 0;
    std::size_t warnings = 0;  // records skipped for missing q-values / chosen action
};

// Environment-feedback refinement: keep exactly the decisions whose chosen
// action attains the argmax of Q (ties resolve in PhaseId order).
inline RefineResult refine_filter(const std::vector<ReasoningRecord>& records) {
    RefineResult out;
    for (std::size_t idx = 0; idx < records.size(); ++idx) {
        const ReasoningRecord& r = records[idx];
        if (r.outcomes.size() != 4 || !r.chosen_action) {
            ++out.warnings;
            continue;
        }
        FeedbackLabel label;
        label.record_index = idx;
        label.chosen = *r.chosen_action;
        PhaseId argmax = PhaseId::ETWT;
        double best = -1.0;
        for (const RolloutOutcome& o : r.outcomes) {
            label.q_values[static_cast<int>(o.action)] = o.q_value;
            if (o.q_value > best) {
                best = o.q_value;
                argmax = o.action;
            }
        }
        label.kept = label.chosen == argmax;
        if (label.kept)
            out.kept_indices.push_back(idx);
        else
            ++out.dropped;
        out.labels.push_back(label);
    }
    return out;
}

}  // namespace gridlight

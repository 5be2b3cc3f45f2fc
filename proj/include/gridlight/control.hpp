#pragma once

#include <gridlight/prompting.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace gridlight {

struct Decision {
    PhaseId phase = PhaseId::ETWT;
    Tier tier = Tier::Baseline;
    std::string rationale_digest;
    double latency_ms = 0.0;
};

struct DecisionContext {
    const ObservationSet& obs;
    const SpatioTemporalGraph& graph;
    std::vector<const HistoryEntry*> history;
    const RoadNetwork& net;
    const SimConfig& cfg;
    NodeIdx intersection = 0;
    int step_index = 0;  // decisions taken at this intersection so far
    // One-decision-deep rollout: total queue over the oracle scope after
    // forcing the phase. Empty when the caller cannot fork the state.
    std::function<long long(PhaseId)> rollout_queue;
};

class Controller {
  public:
    virtual ~Controller() = default;
    virtual Decision decide(const DecisionContext& ctx) = 0;
    virtual const char* name() const = 0;
};

inline Decision fixed_time_decide(int step_index) {
    Decision d;
    d.phase = kPhases[step_index % 4];
    d.tier = Tier::Baseline;
    d.rationale_digest = "cycle";
    return d;
}

namespace detail {

inline int local_queue(const ObservationSet& obs, const RoadNetwork& net, LaneIdx l) {
    const ObsRow* row = obs.find_local(net.lane(l).id);
    return row ? row->obs.n_queue : 0;
}

}  // namespace detail

// MaxPressure: argmax over phases of the queue-count difference between the
// phase's incoming lanes and their downstream lanes. Right-turn lanes are
// uncontrollable and excluded. Ties resolve in PhaseId order.
inline Decision max_pressure_decide(const ObservationSet& obs, const RoadNetwork& net, NodeIdx i) {
    Decision d;
    d.tier = Tier::Baseline;
    long long best = std::numeric_limits<long long>::min();
    std::string digest = "pressure=[";
    for (PhaseId p : kPhases) {
        long long pressure = 0;
        for (LaneIdx l : net.allowed_lanes(i, p)) {
            if (net.lane(l).movement == Movement::Right) continue;
            pressure += detail::local_queue(obs, net, l);
            if (LaneIdx down = net.downstream_lane(l); down != kNoLane)
                pressure -= detail::local_queue(obs, net, down);
        }
        digest += (p == PhaseId::ETWT ? "" : ",") + std::to_string(pressure);
        if (pressure > best) {
            best = pressure;
            d.phase = p;
        }
    }
    d.rationale_digest = digest + "]";
    return d;
}

class FixedTimeController : public Controller {
  public:
    Decision decide(const DecisionContext& ctx) override { return fixed_time_decide(ctx.step_index); }
    const char* name() const override { return "FixedTime"; }
};

class MaxPressureController : public Controller {
  public:
    Decision decide(const DecisionContext& ctx) override {
        return max_pressure_decide(ctx.obs, ctx.net, ctx.intersection);
    }
    const char* name() const override { return "MaxPressure"; }
};

namespace detail {

// Queued vehicles a phase would actually release this green, locally.
inline long long release_score(const ObservationSet& obs, const RoadNetwork& net, NodeIdx i,
                               PhaseId p, int cap) {
    long long score = 0;
    for (LaneIdx l : net.allowed_lanes(i, p)) {
        if (net.lane(l).movement == Movement::Right) continue;
        score += std::min(local_queue(obs, net, l), cap);
    }
    return score;
}

// Critical-lane adjustments: a phase feeding a congested receiver beyond its
// spare capacity loses the blocked excess; a phase serving a congested
// upstream feeder gains that feeder's queue.
inline long long critical_adjustment(const ObservationSet& obs, const RoadNetwork& net, NodeIdx i,
                                     PhaseId p, int cap) {
    long long adj = 0;
    for (const ObsRow& c : obs.neighbor) {
        LaneIdx cl = net.lane_index(c.lane);
        if (c.incoming) {
            for (LaneIdx l : net.allowed_lanes(i, p)) {
                if (l == cl && net.lane(l).movement != Movement::Right) {
                    adj += c.obs.n_queue;
                    break;
                }
            }
        } else {
            std::uint32_t road = net.lane(cl).road;
            long long planned = 0;
            for (LaneIdx l : net.allowed_lanes(i, p)) {
                if (net.lane(l).movement == Movement::Right) continue;
                LaneIdx down = net.downstream_lane(l);
                if (down != kNoLane && net.lane(down).road == road)
                    planned += std::min(local_queue(obs, net, l), cap);
            }
            long long spare = net.lane(cl).capacity - (c.obs.n_queue + c.obs.n_move);
            adj -= std::max(0LL, planned - std::max(0LL, spare));
        }
    }
    return adj;
}

}  // namespace detail

// Deterministic reference policy with the three-tier dispatch: local argmax
// when nothing around is critical, penalty/bonus scoring against the single
// critical lane, and one-decision rollouts once several lanes are critical.
inline Decision complexity_aware_decide(const DecisionContext& ctx) {
    const int n_c = congestion_risk(ctx.obs);
    const Tier tier = tier_for(n_c);
    const int cap = ctx.cfg.green_discharge_cap();
    Decision d;
    d.tier = tier;

    if (tier == Tier::Complex && ctx.rollout_queue) {
        try {
            long long best = std::numeric_limits<long long>::max();
            std::string digest = "nc=" + std::to_string(n_c) + " rollout=[";
            for (PhaseId p : kPhases) {
                long long total = ctx.rollout_queue(p);
                digest += (p == PhaseId::ETWT ? "" : ",") + std::to_string(total);
                if (total < best) {
                    best = total;
                    d.phase = p;
                }
            }
            d.rationale_digest = digest + "]";
            return d;
        } catch (const std::exception&) {
            // Oracle unavailable: degrade to critical-lane scoring.
        }
    }

    // Saturated approaches all release the same capped count; the raw queue
    // total breaks those ties ahead of the PhaseId order, else the first
    // phase starves equally-saturated cross traffic.
    std::pair<long long, long long> best{std::numeric_limits<long long>::min(), 0};
    std::string digest = "nc=" + std::to_string(n_c) + " score=[";
    for (PhaseId p : kPhases) {
        long long score = detail::release_score(ctx.obs, ctx.net, ctx.intersection, p, cap);
        if (n_c > 0)
            score += detail::critical_adjustment(ctx.obs, ctx.net, ctx.intersection, p, cap);
        long long total = 0;
        for (LaneIdx l : ctx.net.allowed_lanes(ctx.intersection, p))
            if (ctx.net.lane(l).movement != Movement::Right)
                total += detail::local_queue(ctx.obs, ctx.net, l);
        digest += (p == PhaseId::ETWT ? "" : ",") + std::to_string(score);
        if (std::pair(score, total) > best) {
            best = {score, total};
            d.phase = p;
        }
    }
    d.rationale_digest = digest + "]";
    return d;
}

class ComplexityAwareController : public Controller {
  public:
    Decision decide(const DecisionContext& ctx) override { return complexity_aware_decide(ctx); }
    const char* name() const override { return "ComplexityAware"; }
};

using ChatFn = std::function<std::string(const PromptBundle&)>;

// LLM-backed controller shell: renders the tier prompt, calls the endpoint,
// parses the structured reply. Any failure yields the fallback's decision
// tagged Baseline; an episode never dies on a bad reply.
class LlmController : public Controller {
  public:
    LlmController(ChatFn chat, std::unique_ptr<Controller> fallback,
                  std::string task = kDefaultTaskDescription)
        : chat_(std::move(chat)), fallback_(std::move(fallback)), task_(std::move(task)) {
        if (!chat_) throw ValidationError("llm controller: chat endpoint required");
        if (!fallback_) fallback_ = std::make_unique<MaxPressureController>();
    }

    Decision decide(const DecisionContext& ctx) override {
        Tier tier = tier_for(congestion_risk(ctx.obs));
        PromptBundle bundle = render(ctx.obs, ctx.graph, ctx.history, tier, task_);
        try {
            ParsedReply reply = parse(chat_(bundle), tier);
            Decision d;
            d.phase = reply.signal;
            d.tier = tier;
            d.rationale_digest = digest_hex(canonical_reply(reply, tier)).substr(0, 12);
            return d;
        } catch (const std::exception&) {
            Decision d = fallback_->decide(ctx);
            d.tier = Tier::Baseline;
            return d;
        }
    }
    const char* name() const override { return "Llm"; }

  private:
    ChatFn chat_;
    std::unique_ptr<Controller> fallback_;
    std::string task_;
};

enum class ControllerKind { FixedTime, MaxPressure, ComplexityAware, Llm };

inline const char* to_string(ControllerKind k) {
    switch (k) {
        case ControllerKind::FixedTime: return "FixedTime";
        case ControllerKind::MaxPressure: return "MaxPressure";
        case ControllerKind::ComplexityAware: return "ComplexityAware";
        default: return "Llm";
    }
}

struct ControllerSpec {
    ControllerKind kind = ControllerKind::FixedTime;
    std::optional<double> alpha;   // override of the run-level threshold
    std::optional<int> delta_t;    // override of the run-level history window
    std::string fallback = "MaxPressure";

    static ControllerSpec from_json(const Json& j) {
        ControllerSpec s;
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "FixedTime")
            s.kind = ControllerKind::FixedTime;
        else if (kind == "MaxPressure")
            s.kind = ControllerKind::MaxPressure;
        else if (kind == "ComplexityAware")
            s.kind = ControllerKind::ComplexityAware;
        else if (kind == "Llm")
            s.kind = ControllerKind::Llm;
        else
            throw ValidationError("controller: unknown kind '" + kind + "'");
        if (j.contains("alpha")) {
            s.alpha = j["alpha"].get<double>();
            if (*s.alpha < 0.0 || *s.alpha > 1.0)
                throw ValidationError("controller: alpha must be within [0, 1]");
        }
        if (j.contains("delta_t")) {
            s.delta_t = j["delta_t"].get<int>();
            if (*s.delta_t < 0) throw ValidationError("controller: delta_t must be >= 0");
        }
        s.fallback = j.value("fallback", s.fallback);
        return s;
    }
};

// Assignment file: intersection id -> controller spec, with "*" as default.
inline std::map<std::string, ControllerSpec> parse_assignment(const Json& j) {
    if (!j.is_object()) throw ValidationError("controller assignment: expected an object");
    std::map<std::string, ControllerSpec> out;
    for (const auto& [key, value] : j.items()) out[key] = ControllerSpec::from_json(value);
    return out;
}

inline ControllerSpec resolve_assignment(const std::map<std::string, ControllerSpec>& assignment,
                                         const std::string& intersection_id) {
    if (auto it = assignment.find(intersection_id); it != assignment.end()) return it->second;
    if (auto it = assignment.find("*"); it != assignment.end()) return it->second;
    throw ValidationError("controller assignment: no entry for '" + intersection_id +
                          "' and no '*' default");
}

inline std::unique_ptr<Controller> make_fallback(const std::string& name) {
    if (name == "FixedTime") return std::make_unique<FixedTimeController>();
    if (name == "MaxPressure") return std::make_unique<MaxPressureController>();
    if (name == "ComplexityAware") return std::make_unique<ComplexityAwareController>();
    throw ValidationError("controller: unknown fallback '" + name + "'");
}

inline std::unique_ptr<Controller> make_controller(const ControllerSpec& spec,
                                                   const ChatFn& chat = nullptr) {
    switch (spec.kind) {
        case ControllerKind::FixedTime: return std::make_unique<FixedTimeController>();
        case ControllerKind::MaxPressure: return std::make_unique<MaxPressureController>();
        case ControllerKind::ComplexityAware: return std::make_unique<ComplexityAwareController>();
        case ControllerKind::Llm:
            if (!chat)
                throw ValidationError("controller: Llm kind needs a configured endpoint");
            return std::make_unique<LlmController>(chat, make_fallback(spec.fallback));
    }
    throw ValidationError("controller: unreachable kind");
}

}  // namespace gridlight

#pragma once

#include <gridlight/observe.hpp>

#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gridlight {

struct EndpointConfig {
    std::string base_url;
    std::string model = "gpt-4o";
    double temperature = 0.1;
    int max_tokens = 1024;
    int timeout_s = 30;
    int retries = 2;
    int backoff_ms = 100;
    std::string api_key_env = "GRIDLIGHT_API_KEY";

    void validate() const {
        if (base_url.empty()) throw ValidationError("endpoint: base_url required");
        if (retries < 0) throw ValidationError("endpoint: retries must be >= 0");
        if (temperature < 0.0 || temperature > 2.0)
            throw ValidationError("endpoint: temperature must be within [0, 2]");
    }

    static EndpointConfig from_json(const Json& j) {
        EndpointConfig e;
        e.base_url = j.value("base_url", std::string());
        e.model = j.value("model", e.model);
        e.temperature = j.value("temperature", e.temperature);
        e.max_tokens = j.value("max_tokens", e.max_tokens);
        e.timeout_s = j.value("timeout_s", e.timeout_s);
        e.retries = j.value("retries", e.retries);
        e.backoff_ms = j.value("backoff_ms", e.backoff_ms);
        e.api_key_env = j.value("api_key_env", e.api_key_env);
        e.validate();
        return e;
    }
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    Tier tier = Tier::NoCoop;
    std::size_t token_estimate = 0;
};

struct ParsedReply {
    std::optional<int> n_c;
    std::optional<std::string> analysis;
    std::optional<std::map<PhaseId, Json>> predictions;  // one slot per phase
    PhaseId signal = PhaseId::ETWT;
};

inline const char* kDefaultTaskDescription =
    "Control the traffic signal at your assigned intersection to keep the whole "
    "road network moving. Serve long queues promptly, avoid releasing vehicles "
    "into congested downstream lanes, and clear upstream feeders that are close "
    "to spilling back. Every decision holds for one green interval.";

namespace detail {

inline std::string fmt1(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", x);
    return buf;
}

inline std::string fmt2(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", x);
    return buf;
}

inline std::string row_line(const ObsRow& r, bool critical) {
    std::string s = "- ";
    s += to_string(r.side);
    s += r.incoming ? " in " : " out ";
    s += to_string(r.movement);
    s += " (" + r.lane + "): queued=" + std::to_string(r.obs.n_queue) +
         " moving=" + std::to_string(r.obs.n_move) + " wait=" + fmt1(r.obs.tau) +
         "s occ=" + fmt2(r.obs.rho);
    if (critical) s += " [critical]";
    s += "\n";
    return s;
}

inline std::string phase_name_list() {
    return "ETWT|ELWL|NTST|NLSL";
}

}  // namespace detail

// Deterministic, byte-stable rendering of one decision prompt. Every lane row
// carried by the ObservationSet appears exactly once: local rows are printed
// in full (critical ones tagged), neighbor rows outside the local view get
// their own section.
inline PromptBundle render(const ObservationSet& obs, const SpatioTemporalGraph& graph,
                           const std::vector<const HistoryEntry*>& history, Tier tier,
                           const std::string& task = kDefaultTaskDescription) {
    PromptBundle b;
    b.tier = tier;
    b.system_text =
        "You are a traffic signal control agent. You operate exactly one "
        "intersection and cooperate with neighboring intersections through the "
        "observations you are given. Reply with a single JSON object and nothing "
        "else.";

    std::set<std::string> critical_ids;
    for (const auto& r : obs.neighbor) critical_ids.insert(r.lane);

    std::string u;
    u += "## Task\n" + task + "\n\n";

    u += "## Current Observations\n";
    u += "Intersection " + obs.intersection + ", t=" + std::to_string(obs.timestamp) +
         "s, communication threshold alpha=" + detail::fmt2(obs.alpha) + ".\n";
    u += "Local lanes:\n";
    for (const auto& r : obs.local) u += detail::row_line(r, critical_ids.count(r.lane) > 0);
    std::set<std::string> local_ids;
    for (const auto& r : obs.local) local_ids.insert(r.lane);
    std::vector<const ObsRow*> extra;
    for (const auto& r : obs.neighbor)
        if (!local_ids.count(r.lane)) extra.push_back(&r);
    u += "Critical neighbor lanes (occ >= " + detail::fmt2(obs.alpha) + "): " +
         std::to_string(obs.neighbor.size()) + "\n";
    for (const ObsRow* r : extra) u += detail::row_line(*r, true);

    u += "\n## Spatial Relations\n";
    u += "Nodes: ";
    for (std::size_t k = 0; k < graph.nodes.size(); ++k) {
        if (k) u += ", ";
        u += graph.nodes[k];
    }
    u += "\n";
    for (const auto& e : graph.edges) {
        u += "- " + e.from + " -> " + e.to + " via " + e.lane + " (" +
             to_string(e.movement) + ", " + detail::fmt1(e.length) + " m, heading " +
             to_string(e.direction) + ")\n";
    }

    u += "\n## Recent History\n";
    if (history.empty()) {
        u += "- none\n";
    } else {
        for (const HistoryEntry* h : history) {
            u += "- t=" + std::to_string(h->obs.timestamp) + "s phases:";
            for (std::size_t k = 0; k < h->phases.size(); ++k) {
                u += k ? ", " : " ";
                u += h->phases[k].first + "=" + to_string(h->phases[k].second);
            }
            u += "; critical:";
            if (h->obs.neighbor.empty()) {
                u += " none";
            } else {
                for (std::size_t k = 0; k < h->obs.neighbor.size(); ++k) {
                    const ObsRow& r = h->obs.neighbor[k];
                    u += k ? ", " : " ";
                    u += std::string(to_string(r.side)) + (r.incoming ? " in " : " out ") +
                         to_string(r.movement) + " occ=" + detail::fmt2(r.obs.rho);
                }
            }
            u += "\n";
        }
    }

    u += "\n## Action Space\n";
    u += "- ETWT: east-west through\n- ELWL: east-west left-turn\n";
    u += "- NTST: north-south through\n- NLSL: north-south left-turn\n";
    u += "Right turns are always allowed and need no phase.\n";

    u += "\n## Output\n";
    switch (tier) {
        case Tier::NoCoop:
            u += "No critical neighbor lanes: decide locally. Reply with exactly one "
                 "JSON object:\n{\"signal\": \"" + detail::phase_name_list() + "\"}\n";
            break;
        case Tier::Simple:
            u += "One critical neighbor lane: analyze the local spatiotemporal "
                 "dependency with that lane, then pick the signal. Reply with exactly "
                 "one JSON object:\n{\"analysis\": \"...\", \"signal\": \"" +
                 detail::phase_name_list() + "\"}\n";
            break;
        default:
            u += "Multiple critical neighbor lanes: follow three steps. Step 1: analyze "
                 "traffic conditions at the assigned and neighboring intersections. "
                 "Step 2: predict the next-step traffic state for each of the four "
                 "signals (fill all four prediction slots). Step 3: select the signal "
                 "that best serves network-wide flow. Reply with exactly one JSON "
                 "object:\n{\"analysis\": \"...\", \"predictions\": {\"ETWT\": "
                 "{\"total_queue\": N}, \"ELWL\": {\"total_queue\": N}, \"NTST\": "
                 "{\"total_queue\": N}, \"NLSL\": {\"total_queue\": N}}, \"signal\": "
                 "\"" + detail::phase_name_list() + "\"}\n";
            break;
    }

    b.user_text = std::move(u);
    b.token_estimate = (b.system_text.size() + b.user_text.size()) / 4;
    return b;
}

namespace detail {

// Top-level balanced JSON objects in a free-text reply, in order.
inline std::vector<std::string> extract_json_objects(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            ++i;
            continue;
        }
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        std::size_t start = i;
        std::size_t j = i;
        for (; j < text.size(); ++j) {
            char c = text[j];
            if (in_string) {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"')
                in_string = true;
            else if (c == '{')
                ++depth;
            else if (c == '}' && --depth == 0) {
                out.push_back(text.substr(start, j - start + 1));
                break;
            }
        }
        i = depth == 0 && j < text.size() ? j + 1 : i + 1;
    }
    return out;
}

}  // namespace detail

// Extracts the reply object (fenced or bare JSON) and validates it against
// the tier's schema. Multiple distinct candidate objects are an error.
inline ParsedReply parse(const std::string& raw, Tier tier) {
    std::vector<Json> candidates;
    for (const std::string& s : detail::extract_json_objects(raw)) {
        Json j = Json::parse(s, nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("signal")) candidates.push_back(j);
    }
    if (candidates.empty())
        throw SchemaError("reply: no JSON object with a 'signal' field found");
    for (std::size_t k = 1; k < candidates.size(); ++k)
        if (candidates[k] != candidates[0])
            throw SchemaError("reply: multiple conflicting JSON objects");
    const Json& j = candidates[0];

    ParsedReply r;
    if (!j["signal"].is_string())
        throw SchemaError("reply: 'signal' must be a string");
    auto phase = phase_from_string(j["signal"].get<std::string>());
    if (!phase)
        throw SchemaError("reply: invalid signal '" + j["signal"].get<std::string>() + "'");
    r.signal = *phase;

    if (j.contains("n_c")) {
        if (!j["n_c"].is_number_integer()) throw SchemaError("reply: 'n_c' must be an integer");
        r.n_c = j["n_c"].get<int>();
    }
    if (j.contains("analysis")) {
        if (!j["analysis"].is_string()) throw SchemaError("reply: 'analysis' must be a string");
        r.analysis = j["analysis"].get<std::string>();
    }
    if (j.contains("predictions")) {
        if (!j["predictions"].is_object())
            throw SchemaError("reply: 'predictions' must be an object");
        std::map<PhaseId, Json> preds;
        for (const auto& [key, value] : j["predictions"].items()) {
            auto p = phase_from_string(key);
            if (!p) throw SchemaError("reply: prediction key '" + key + "' is not a phase");
            preds[*p] = value;
        }
        r.predictions = std::move(preds);
    }

    if (tier == Tier::Simple && !r.analysis)
        throw SchemaError("reply: tier requires 'analysis'");
    if (tier == Tier::Complex) {
        if (!r.analysis) throw SchemaError("reply: tier requires 'analysis'");
        if (!r.predictions) throw SchemaError("reply: tier requires 'predictions'");
        for (PhaseId p : kPhases)
            if (!r.predictions->count(p))
                throw SchemaError(std::string("reply: prediction slot missing for ") +
                                  to_string(p));
    }
    return r;
}

// Canonical JSON form of a reply; parse() of this string round-trips.
inline std::string canonical_reply(const ParsedReply& r, Tier tier) {
    Json j;
    if (r.n_c) j["n_c"] = *r.n_c;
    if (tier != Tier::NoCoop && r.analysis) j["analysis"] = *r.analysis;
    if (tier == Tier::Complex && r.predictions) {
        Json preds;
        for (PhaseId p : kPhases) {
            auto it = r.predictions->find(p);
            preds[to_string(p)] = it != r.predictions->end() ? it->second : Json::object();
        }
        j["predictions"] = std::move(preds);
    }
    j["signal"] = to_string(r.signal);
    return j.dump();
}

}  // namespace gridlight

#include <gridlight/network.hpp>

#include <CLI11.hpp>
#include <httplib.h>

#include <atomic>
#include <iostream>
#include <sstream>

using namespace gridlight;

namespace {

// Reads the rendered observation table back out of the prompt and picks the
// phase holding the longest queues. Good enough to drive demo episodes
// without any model behind it.
PhaseId pick_signal(const std::string& user_text) {
    long long buckets[4] = {0, 0, 0, 0};
    std::istringstream in(user_text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("- ", 0) != 0) continue;
        std::istringstream row(line);
        std::string dash, side, dir, movement;
        row >> dash >> side >> dir >> movement;
        auto q = line.find("queued=");
        if (q == std::string::npos || dir != "in") continue;
        long long queued = std::strtoll(line.c_str() + q + 7, nullptr, 10);
        bool ew = side == "E" || side == "W";
        if (movement == "through")
            buckets[static_cast<int>(ew ? PhaseId::ETWT : PhaseId::NTST)] += queued;
        else if (movement == "left")
            buckets[static_cast<int>(ew ? PhaseId::ELWL : PhaseId::NLSL)] += queued;
    }
    PhaseId best = PhaseId::ETWT;
    for (PhaseId p : kPhases)
        if (buckets[static_cast<int>(p)] > buckets[static_cast<int>(best)]) best = p;
    return best;
}

std::string make_reply(const std::string& user_text) {
    PhaseId signal = pick_signal(user_text);
    bool wants_predictions = user_text.find("\"predictions\"") != std::string::npos;
    bool wants_analysis = user_text.find("\"analysis\"") != std::string::npos;
    Json reply;
    if (wants_analysis)
        reply["analysis"] = "Serving the heaviest queued movement while critical lanes drain.";
    if (wants_predictions) {
        Json preds;
        for (PhaseId p : kPhases) preds[to_string(p)] = {{"total_queue", 0}};
        reply["predictions"] = std::move(preds);
    }
    reply["signal"] = to_string(signal);
    return reply.dump();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridlight-mockllm: deterministic OpenAI-compatible endpoint for offline runs"};
    std::string host = "127.0.0.1";
    int port = 8973;
    int corrupt_every = 0;
    app.add_option("--host", host, "bind address");
    app.add_option("--port", port, "bind port");
    app.add_option("--corrupt-every", corrupt_every,
                   "emit a malformed reply every Nth call (0 = never)");
    CLI11_PARSE(app, argc, argv);

    std::atomic<int> calls{0};
    httplib::Server svr;
    svr.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        int call = calls++;
        Json body = Json::parse(req.body, nullptr, false);
        std::string user_text;
        if (!body.is_discarded() && body.contains("messages"))
            for (const Json& m : body["messages"])
                if (m.value("role", std::string()) == "user")
                    user_text = m.value("content", std::string());
        std::string content = (corrupt_every > 0 && (call + 1) % corrupt_every == 0)
                                  ? "signal systems offline, try again"
                                  : make_reply(user_text);
        Json reply = {{"id", "mock-" + std::to_string(call)},
                      {"object", "chat.completion"},
                      {"choices",
                       {{{"index", 0},
                         {"message", {{"role", "assistant"}, {"content", content}}},
                         {"finish_reason", "stop"}}}}};
        res.set_content(reply.dump(), "application/json");
    });

    std::cout << "mock llm listening on http://" << host << ":" << port << "/v1" << std::endl;
    svr.listen(host, port);
    return 0;
}

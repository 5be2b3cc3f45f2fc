#include <gridlight/config.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace gridlight;

namespace {

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_dir, bool log_llm) {
    RunConfig rc = load_run_config(config_path);
    if (seed) rc.sim.seed = *seed;
    ChatFn chat;
    if (rc.llm) {
        std::filesystem::create_directories(out_dir);
        chat = make_chat_fn(*rc.llm,
                            log_llm ? (std::filesystem::path(out_dir) / "llm.jsonl").string() : "");
    }
    RunResult res = execute_run(rc, chat);
    write_run_outputs(res, out_dir);
    std::cout << "run complete: " << res.metrics.vehicles_entered << " vehicles, "
              << res.metrics.vehicles_finished << " finished";
    if (res.metrics.vehicles_entered > 0)
        std::cout << ", ATT " << round2(res.metrics.att) << " s, AWT " << round2(res.metrics.awt)
                  << " s";
    std::cout << "\noutputs in " << out_dir << std::endl;
    return 0;
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& controller_files,
                std::optional<std::uint64_t> seed, const std::string& out_csv) {
    std::string csv = "controller,att,awt,finished,inference_ms\n";
    for (const std::string& file : controller_files) {
        RunConfig rc = load_run_config(config_path);
        if (seed) rc.sim.seed = *seed;
        rc.assignment = parse_assignment(parse_json_file(file));
        ChatFn chat;
        if (rc.llm) chat = make_chat_fn(*rc.llm);
        RunResult res = execute_run(rc, chat);
        double inference = 0.0;
        for (const auto& [name, ms] : res.timing["per_controller_ms"].items())
            inference += ms.get<double>();
        std::string label = std::filesystem::path(file).stem().string();
        csv += label + "," + std::to_string(round2(res.metrics.att)) + "," +
               std::to_string(round2(res.metrics.awt)) + "," +
               std::to_string(res.metrics.vehicles_finished) + "," +
               std::to_string(round2(inference)) + "\n";
        std::cout << label << ": ATT " << round2(res.metrics.att) << " AWT "
                  << round2(res.metrics.awt) << std::endl;
    }
    write_file(out_csv, csv);
    std::cout << "wrote " << out_csv << std::endl;
    return 0;
}

int cmd_datagen(const std::string& config_path, std::optional<std::uint64_t> seed,
                const std::string& out_dir, std::size_t max_records,
                std::optional<int> duration) {
    RunConfig rc = load_run_config(config_path);
    if (seed) rc.sim.seed = *seed;
    if (duration) rc.duration_s = *duration;
    ChatFn chat;
    Summarizer summarizer;
    if (rc.llm) {
        chat = make_chat_fn(*rc.llm);
        EndpointConfig ep = *rc.llm;
        summarizer = [ep](const ObservationSet& obs, const SpatioTemporalGraph& graph,
                          const std::vector<const HistoryEntry*>& history) {
            PromptBundle bundle = render(obs, graph, history, Tier::Simple);
            bundle.user_text +=
                "\nSummarize the traffic conditions in two sentences instead of "
                "choosing a signal.";
            return chat_complete(ep, bundle);
        };
    }
    ControllerSet controllers = build_controllers(rc.net, rc.assignment, rc.alpha, rc.delta_t, chat);
    DatagenOptions opts;
    opts.run.duration_s = rc.duration_s;
    opts.run.oracle = rc.oracle;
    opts.max_records = max_records;
    opts.summarizer = summarizer;
    DatagenResult res = run_datagen(rc.net, rc.sim, rc.flows, controllers, opts);

    std::filesystem::create_directories(out_dir);
    std::filesystem::path dir(out_dir);
    std::string jsonl;
    for (const ReasoningRecord& r : res.records) jsonl += record_to_json(r).dump() + "\n";
    write_file((dir / "records.jsonl").string(), jsonl);
    write_file((dir / "summary.json").string(), res.summary.dump(2) + "\n");
    std::cout << "datagen complete: " << res.records.size() << " records -> "
              << (dir / "records.jsonl").string() << std::endl;
    return 0;
}

int cmd_refine(const std::string& in_path, const std::string& out_path) {
    std::vector<Json> lines = parse_jsonl(read_file(in_path), in_path);
    std::vector<ReasoningRecord> records;
    for (const Json& j : lines) records.push_back(record_from_json(j));
    RefineResult res = refine_filter(records);
    std::string jsonl;
    for (std::size_t idx : res.kept_indices) jsonl += lines[idx].dump() + "\n";
    write_file(out_path, jsonl);
    std::cout << "refine: kept " << res.kept_indices.size() << ", dropped " << res.dropped
              << ", warnings " << res.warnings << std::endl;
    return 0;
}

int cmd_ici(const std::string& roadnet_path, const std::string& trace_path,
            std::optional<double> speed, int window, const std::string& out_path) {
    RoadNetwork net = load_roadnet(roadnet_path);
    std::vector<Json> lines = parse_jsonl(read_file(trace_path), trace_path);
    auto crossings = crossings_from_trace(lines);
    int duration = 0;
    for (const Json& j : lines)
        if (j.value("type", std::string()) == "vehicle")
            duration = std::max(duration, j["exit"].is_null() ? 0 : j["exit"].get<int>());
    for (const Json& j : lines)
        if (j.value("type", std::string()) == "decision")
            duration = std::max(duration, j["t"].get<int>());
    if (duration == 0) duration = 3600;
    double v = 0.0;
    if (speed) {
        v = *speed;
    } else {
        for (const Lane& lane : net.lanes()) v += lane.max_speed;
        v /= static_cast<double>(net.lanes().size());
    }
    IciReport report = compute_ici(net, crossings, v, duration, window);
    write_file(out_path, report.to_json().dump(2) + "\n");
    std::cout << "ici: mean " << round2(report.mean) << ", max " << round2(report.max) << " -> "
              << out_path << std::endl;
    return 0;
}

int cmd_validate(const std::string& what, const std::string& file,
                 const std::string& roadnet_path) {
    if (what == "roadnet") {
        RoadNetwork net = load_roadnet(file);
        std::cout << "roadnet ok: " << net.controlled().size() << " controlled intersections, "
                  << net.lanes().size() << " lanes" << std::endl;
        return 0;
    }
    if (what == "flow") {
        if (roadnet_path.empty()) {
            std::cerr << "validate flow requires --roadnet" << std::endl;
            return 2;
        }
        RoadNetwork net = load_roadnet(roadnet_path);
        FlowSpec flows = load_flows_file(file, net);
        std::cout << "flow ok: " << flows.entries.size() << " entries" << std::endl;
        return 0;
    }
    if (what == "corpus") {
        std::vector<Json> lines = parse_jsonl(read_file(file), file);
        int bad = 0;
        for (std::size_t k = 0; k < lines.size(); ++k) {
            try {
                validate_record(record_from_json(lines[k]));
            } catch (const std::exception& e) {
                std::cerr << file << " line " << (k + 1) << ": " << e.what() << std::endl;
                ++bad;
            }
        }
        if (bad) {
            std::cerr << bad << " invalid record(s) of " << lines.size() << std::endl;
            return 1;
        }
        std::cout << "corpus ok: " << lines.size() << " records" << std::endl;
        return 0;
    }
    std::cerr << "unknown validate target '" << what << "' (roadnet|flow|corpus)" << std::endl;
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridlight: discrete-time traffic signal control simulator and agent harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", out_file, in_file, roadnet_path, trace_path;
    std::string validate_what, validate_file;
    std::vector<std::string> controller_files;
    std::optional<std::uint64_t> seed;
    std::optional<double> speed;
    std::optional<int> duration;
    std::size_t max_records = static_cast<std::size_t>(-1);
    int window = 30;
    bool log_llm = false;

    auto* run_cmd = app.add_subcommand("run", "execute one episode from a config file");
    run_cmd->add_option("--config", config_path, "run config JSON")->required();
    run_cmd->add_option("--seed", seed, "override the config seed");
    run_cmd->add_option("--out", out_dir, "output directory");
    run_cmd->add_flag("--log-llm", log_llm, "log LLM requests/responses to llm.jsonl");

    auto* compare_cmd =
        app.add_subcommand("compare", "run several controller assignments on one scenario");
    compare_cmd->add_option("--config", config_path, "run config JSON")->required();
    compare_cmd->add_option("--controllers", controller_files, "controller assignment files")
        ->required()
        ->expected(-1);
    compare_cmd->add_option("--seed", seed, "override the config seed");
    compare_cmd->add_option("--out", out_file, "output CSV")->default_val("compare.csv");

    auto* datagen_cmd = app.add_subcommand("datagen", "synthesize a fine-tuning corpus");
    datagen_cmd->add_option("--config", config_path, "run config JSON")->required();
    datagen_cmd->add_option("--seed", seed, "override the config seed");
    datagen_cmd->add_option("--out", out_dir, "output directory");
    datagen_cmd->add_option("--max-records", max_records, "stop synthesizing after N records");
    datagen_cmd->add_option("--duration", duration, "override episode duration (s)");

    auto* refine_cmd = app.add_subcommand("refine", "keep argmax-Q records from a corpus");
    refine_cmd->add_option("--in", in_file, "input records.jsonl")->required();
    refine_cmd->add_option("--out", out_file, "output records.jsonl")->required();

    auto* ici_cmd = app.add_subcommand("ici", "compute the intersection connectivity index");
    ici_cmd->add_option("--roadnet", roadnet_path, "roadnet JSON")->required();
    ici_cmd->add_option("--trace", trace_path, "episode trace.jsonl")->required();
    ici_cmd->add_option("--speed", speed, "average vehicle speed (default: mean lane max_speed)");
    ici_cmd->add_option("--window", window, "crossing window in seconds")->default_val(30);
    ici_cmd->add_option("--out", out_file, "output JSON")->default_val("ici.json");

    auto* validate_cmd = app.add_subcommand("validate", "check roadnet/flow/corpus files");
    validate_cmd->add_option("what", validate_what, "roadnet | flow | corpus")->required();
    validate_cmd->add_option("file", validate_file, "file to validate")->required();
    validate_cmd->add_option("--roadnet", roadnet_path, "roadnet for flow validation");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(config_path, seed, out_dir, log_llm);
        if (compare_cmd->parsed()) return cmd_compare(config_path, controller_files, seed, out_file);
        if (datagen_cmd->parsed())
            return cmd_datagen(config_path, seed, out_dir, max_records, duration);
        if (refine_cmd->parsed()) return cmd_refine(in_file, out_file);
        if (ici_cmd->parsed()) return cmd_ici(roadnet_path, trace_path, speed, window, out_file);
        if (validate_cmd->parsed()) return cmd_validate(validate_what, validate_file, roadnet_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 2;
}

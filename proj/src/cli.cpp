#include "prefstream/cli.hpp"

#include "prefstream/config.hpp"
#include "prefstream/curriculum.hpp"
#include "prefstream/error.hpp"
#include "prefstream/evalharness.hpp"
#include "prefstream/hashing.hpp"
#include "prefstream/manifest.hpp"
#include "prefstream/model_client.hpp"
#include "prefstream/rlengine.hpp"
#include "prefstream/simlab.hpp"
#include "prefstream/streamer.hpp"
#include "prefstream/synthpipe.hpp"
#include "prefstream/transferbench.hpp"

#include "CLI11.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <fstream>
#include <iostream>
#include <limits>

namespace prefstream {

namespace {

namespace fs = std::filesystem;

struct Globals {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string log_level = "info";
};

/// Per-run context: the manifest being filled and shared telemetry.
struct Run {
    RunManifest manifest;
    std::shared_ptr<Telemetry> telemetry = std::make_shared<Telemetry>();
    std::uint64_t stage_seed = 0;

    std::unique_ptr<ModelClient> client(const fs::path& endpoint_path) {
        manifest.add_config(endpoint_path);
        return make_client(load_endpoint(endpoint_path), telemetry);
    }

    Json config(const fs::path& path) {
        manifest.add_config(path);
        return load_config(path);
    }

    void finish(const fs::path& manifest_path) {
        manifest.counters = telemetry->snapshot();
        finish_manifest(manifest, manifest_path);
    }
};

Run start_run(const std::string& command, const std::vector<std::string>& args, const Globals& g) {
    Run run;
    run.manifest.command = command;
    run.manifest.arguments = args;
    run.manifest.seed = g.seed;
    run.manifest.started_at = utc_timestamp();
    run.stage_seed = derive_seed(g.seed, command);
    return run;
}

/// CLI flag > config file > default.
template <typename T>
T layered(const CLI::Option* flag, const T& flag_value, const Json& config, const char* key, const T& fallback) {
    if (flag && flag->count() > 0) return flag_value;
    if (config.is_object() && config.contains(key) && !config[key].is_null()) {
        try {
            return config[key].get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("config key '") + key + "' has the wrong type");
        }
    }
    return fallback;
}

fs::path config_ref(const Json& config, const char* key, const fs::path& config_path, bool required = true) {
    if (!config.is_object() || !config.contains(key) || !config[key].is_string()) {
        if (required) throw ConfigError(config_path.string() + ": missing endpoint reference '" + key + "'");
        return {};
    }
    return resolve_path(config_path.parent_path(), config[key].get<std::string>());
}

double parse_eps(const std::string& text) {
    if (text == "inf" || text == "infinity" || text == "none") return kUnclipped;
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || v < 0.0) {
        throw ConfigError("--eps expects a non-negative number or 'inf', got '" + text + "'");
    }
    return v;
}

std::vector<std::vector<double>> read_logprob_rows(const fs::path& path) {
    std::vector<std::vector<double>> out;
    for (const auto& j : read_jsonl(path)) {
        if (j.is_array()) out.push_back(j.get<std::vector<double>>());
        else if (j.contains("new_logprobs")) out.push_back(j["new_logprobs"].get<std::vector<double>>());
        else if (j.contains("logprobs")) out.push_back(j["logprobs"].get<std::vector<double>>());
        else if (j.contains("old_logprobs")) out.push_back(j["old_logprobs"].get<std::vector<double>>());
        else throw ValidationError(path.string() + ": row without logprobs");
    }
    return out;
}

const char* category(const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e)) return "validation";
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const ContractError*>(&e)) return "contract";
    if (dynamic_cast<const DomainError*>(&e)) return "domain";
    if (dynamic_cast<const BackendError*>(&e)) return "backend";
    if (dynamic_cast<const GenerationError*>(&e)) return "generation";
    if (dynamic_cast<const JudgeError*>(&e)) return "judge";
    if (dynamic_cast<const Error*>(&e)) return "stage";
    return "internal";
}

void setup_logging(const std::string& level) {
    auto logger = spdlog::get("prefstream");
    if (!logger) logger = spdlog::stderr_color_mt("prefstream");
    spdlog::set_default_logger(logger);
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && level != "off") throw ConfigError("unknown log level '" + level + "'");
    spdlog::set_level(lvl);
}

void write_simlab_endpoints(const fs::path& dir) {
    auto endpoint = [&](const std::string& name, const std::string& role, const std::string& extra) {
        write_text_atomic(dir / (name + ".yaml"), "base_url: mock:simlab\nmodel_id: simlab-" + name + "\nrole: " + role +
                                                      "\nbackoff_ms: 0\noptions:\n  world: .\n" + extra);
    };
    endpoint("generator", "generator", "  quality: 1.0\n");
    endpoint("merger", "merger", "  quality: 1.0\n");
    endpoint("policy", "policy", "  quality: 0.5\n");
    endpoint("judge", "judge", "  judge_mode: summary\n  kappa: 8\n");
    endpoint("downstream", "judge", "  judge_mode: summary\n  kappa: 8\n");
    endpoint("embedder", "embedder", "");
    write_text_atomic(dir / "synth.yaml",
                      "generator: generator.yaml\njudge: judge.yaml\nmerger: merger.yaml\n"
                      "tau_tract: 0.9\nmax_targets: 5\nmin_kept: 3\nlambda: 0.8\nsegments: 2\nmin_per_segment: 3\n");
    write_text_atomic(dir / "curriculum.yaml",
                      "probability_floor: 1.0e-6\ndefault:\n  alpha: 0.5\n  tract_low: 0.5\n  tract_high: 1.0\n");
}

} // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Preference-summary data pipelines: synthesis, pruning, rollouts, streaming inference and evaluation"};
    app.name(args.empty() ? "prefstream" : fs::path(args[0]).filename().string());
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    Globals g;
    app.add_option("--seed", g.seed, "Global seed; every stage derives its own stream from it");
    app.add_option("--jobs", g.jobs, "Worker threads per stage")->check(CLI::Range(std::size_t{1}, std::size_t{1024}));
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, critical or off");

    // synthesize-sft
    auto* synth = app.add_subcommand("synthesize-sft", "Generate, validate and merge streaming SFT records");
    fs::path s_histories, s_scores, s_config, s_out;
    double s_tau = 0.0, s_lambda = 0.0;
    std::size_t s_segments = 0, s_max_targets = 0;
    synth->add_option("--histories", s_histories, "History JSONL")->required()->check(CLI::ExistingFile);
    synth->add_option("--scores", s_scores, "Score sidecar JSONL {user_id, index, s_tract}")->required()->check(CLI::ExistingFile);
    synth->add_option("--config", s_config, "Synthesis config (YAML)")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", s_out, "Output record JSONL")->required();
    auto* s_tau_opt = synth->add_option("--tau-tract", s_tau, "Tractability threshold");
    auto* s_lambda_opt = synth->add_option("--lambda", s_lambda, "User-level accuracy threshold");
    auto* s_segments_opt = synth->add_option("--segments", s_segments, "Segments per user");
    auto* s_max_targets_opt = synth->add_option("--max-targets", s_max_targets, "Targets per segment");

    // prune
    auto* prune_cmd = app.add_subcommand("prune", "Score-based curriculum pruning into RL instances");
    fs::path p_scores, p_config, p_out, p_histories, p_kept;
    std::string p_preset;
    prune_cmd->add_option("--scores", p_scores, "Score sidecar JSONL {user_id, index, strong_p, weak_p}")->required()->check(CLI::ExistingFile);
    prune_cmd->add_option("--config", p_config, "Per-dataset pruning table (YAML)")->required()->check(CLI::ExistingFile);
    prune_cmd->add_option("--histories", p_histories, "History JSONL (datasets and target triples)")->required()->check(CLI::ExistingFile);
    prune_cmd->add_option("--out", p_out, "RL instance JSONL")->required();
    prune_cmd->add_option("--kept", p_kept, "Also write the surviving scores here");
    prune_cmd->add_option("--preset", p_preset, "Fallback row: amazon, mind or alignx");

    // rollout
    auto* rollout_cmd = app.add_subcommand("rollout", "Hierarchical rollouts, rewards and a training batch");
    fs::path r_instances, r_histories, r_policy, r_judge, r_out, r_trees;
    std::size_t r_group = 4;
    double r_gamma = 0.0;
    std::string r_credit = "selected";
    rollout_cmd->add_option("--instances", r_instances, "RL instance JSONL")->required()->check(CLI::ExistingFile);
    rollout_cmd->add_option("--histories", r_histories, "History JSONL")->required()->check(CLI::ExistingFile);
    rollout_cmd->add_option("--policy", r_policy, "Policy endpoint config")->required()->check(CLI::ExistingFile);
    rollout_cmd->add_option("--judge", r_judge, "Judge endpoint config")->required()->check(CLI::ExistingFile);
    rollout_cmd->add_option("-G,--group-size", r_group, "Summaries per rollout set")->check(CLI::Range(std::size_t{1}, std::size_t{1024}));
    rollout_cmd->add_option("--gamma", r_gamma, "Discount on the future term")->required()->check(CLI::Range(0.0, 1.0));
    rollout_cmd->add_option("--future-credit", r_credit, "selected (default) or all initial summaries")
        ->check(CLI::IsMember({"selected", "all"}));
    rollout_cmd->add_option("--out", r_out, "Training batch JSONL")->required();
    rollout_cmd->add_option("--trees", r_trees, "Also write rollout trees with rewards here");

    // loss-check
    auto* loss_cmd = app.add_subcommand("loss-check", "Clipped surrogate loss of a batch under new logprobs");
    fs::path l_batch, l_new, l_out;
    std::string l_eps = "0.2";
    loss_cmd->add_option("--batch", l_batch, "Training batch JSONL")->required()->check(CLI::ExistingFile);
    loss_cmd->add_option("--new-logprobs", l_new, "One logprob sequence per record")->required()->check(CLI::ExistingFile);
    loss_cmd->add_option("--eps", l_eps, "Clip range, or 'inf' for the unclipped objective");
    loss_cmd->add_option("--out", l_out, "Write {loss, records} JSON here");

    // stream-infer
    auto* stream_cmd = app.add_subcommand("stream-infer", "Streaming preference inference with persisted state");
    fs::path st_histories, st_generator, st_state_dir, st_out;
    std::size_t st_chunks = 2;
    stream_cmd->add_option("--histories", st_histories, "History JSONL")->required()->check(CLI::ExistingFile);
    stream_cmd->add_option("--chunks", st_chunks, "Chunks for users without stored state")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20));
    stream_cmd->add_option("--generator", st_generator, "Generator endpoint config")->required()->check(CLI::ExistingFile);
    stream_cmd->add_option("--state-dir", st_state_dir, "Directory holding states.jsonl")->required();
    stream_cmd->add_option("--out", st_out, "Also write {user_id, summary, lineage} JSONL here");

    // build-transfer
    auto* transfer = app.add_subcommand("build-transfer", "Transfer benchmark construction");
    transfer->require_subcommand(1);
    auto* cross = transfer->add_subcommand("cross-domain", "Match users across domains and swap targets");
    fs::path x_a, x_b, x_ta, x_tb, x_embedder, x_out, x_pairs;
    std::size_t x_top_k = 1000;
    cross->add_option("--histories-a", x_a, "Domain A histories")->required()->check(CLI::ExistingFile);
    cross->add_option("--histories-b", x_b, "Domain B histories")->required()->check(CLI::ExistingFile);
    cross->add_option("--targets-a", x_ta, "Domain A evaluation targets")->required()->check(CLI::ExistingFile);
    cross->add_option("--targets-b", x_tb, "Domain B evaluation targets")->required()->check(CLI::ExistingFile);
    cross->add_option("--embedder", x_embedder, "Embedder endpoint config")->required()->check(CLI::ExistingFile);
    cross->add_option("--top-k", x_top_k, "Pairs to keep")->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()));
    cross->add_option("--out", x_out, "Instance JSONL")->required();
    cross->add_option("--pairs", x_pairs, "Also write the matched pairs (JSON) here");

    auto* multi = transfer->add_subcommand("multi-interest", "Inject donor interactions into each history");
    fs::path m_histories, m_donors, m_out;
    double m_intensity = 0.0;
    multi->add_option("--histories", m_histories, "Primary histories")->required()->check(CLI::ExistingFile);
    multi->add_option("--donors", m_donors, "Donor histories (default: the primary corpus)")->check(CLI::ExistingFile);
    multi->add_option("--intensity", m_intensity, "Share of donor interactions in [0, 1)")->required();
    multi->add_option("--out", m_out, "Fused history JSONL; provenance goes to <out>.provenance.jsonl")->required();

    auto* positive = transfer->add_subcommand("positive-only", "Drop every rejected item");
    fs::path po_histories, po_out;
    positive->add_option("--histories", po_histories, "History JSONL")->required()->check(CLI::ExistingFile);
    positive->add_option("--out", po_out, "Output history JSONL")->required();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Selection accuracy of preference summaries");
    fs::path e_summaries, e_instances, e_downstream, e_out, e_histories, e_generator;
    std::string e_tag;
    std::size_t e_chunks = 2;
    bool e_fixed_positions = false;
    auto* e_summaries_opt = eval_cmd->add_option("--summaries", e_summaries, "Summary JSONL")->check(CLI::ExistingFile);
    eval_cmd->add_option("--instances", e_instances, "Instance JSONL")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--downstream", e_downstream, "Downstream endpoint config")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", e_out, "Report JSON")->required();
    auto* e_histories_opt = eval_cmd->add_option("--histories", e_histories, "Compare full-history and streaming protocols on these histories")
        ->check(CLI::ExistingFile);
    auto* e_generator_opt = eval_cmd->add_option("--generator", e_generator, "Generator endpoint for protocol comparison")->check(CLI::ExistingFile);
    eval_cmd->add_option("--chunks", e_chunks, "Streaming chunks for protocol comparison")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20));
    eval_cmd->add_option("--dataset-tag", e_tag, "Label stored in the report");
    eval_cmd->add_flag("--fixed-positions", e_fixed_positions, "Always show the chosen item as Item A");
    e_summaries_opt->excludes(e_histories_opt);
    e_histories_opt->needs(e_generator_opt);
    e_generator_opt->needs(e_histories_opt);

    // simlab-gen
    auto* sim = app.add_subcommand("simlab-gen", "Synthetic users, histories, targets, scores and mock endpoint configs");
    fs::path g_out_dir, g_config;
    simlab::SimConfig sc;
    sim->add_option("--out-dir", g_out_dir, "Output directory")->required();
    sim->add_option("--config", g_config, "YAML with any of the flag names below (underscored)")->check(CLI::ExistingFile);
    auto* g_users = sim->add_option("--users", sc.n_users, "Number of users");
    auto* g_dim = sim->add_option("--dim", sc.dim, "Latent dimension");
    auto* g_len = sim->add_option("--history-len", sc.history_len, "Interactions per history");
    auto* g_margin = sim->add_option("--margin", sc.pair_margin, "Minimum latent margin of every pair");
    auto* g_targets = sim->add_option("--targets", sc.eval_targets, "Held-out evaluation pairs per user");
    auto* g_strong = sim->add_option("--strong-kappa", sc.strong_kappa, "Sharpness of the strong scorer");
    auto* g_weak = sim->add_option("--weak-kappa", sc.weak_kappa, "Sharpness of the weak scorer");
    auto* g_weak_q = sim->add_option("--weak-quality", sc.weak_quality, "Latent share seen by the weak scorer");
    auto* g_tag = sim->add_option("--dataset-tag", sc.dataset_tag, "Dataset tag of the histories");

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const std::vector<std::string> tail(args.begin() + (args.empty() ? 0 : 1), args.end());
    try {
        setup_logging(g.log_level);

        if (synth->parsed()) {
            auto run = start_run("synthesize-sft", tail, g);
            const Json cfg = run.config(s_config);
            auto generator = run.client(config_ref(cfg, "generator", s_config));
            auto judge = run.client(config_ref(cfg, "judge", s_config));
            const auto merger_path = config_ref(cfg, "merger", s_config, false);
            auto merger = merger_path.empty() ? nullptr : run.client(merger_path);

            SynthConfig sc_synth = SynthConfig::from_json(cfg);
            sc_synth.tau_tract = layered(s_tau_opt, s_tau, cfg, "tau_tract", sc_synth.tau_tract);
            sc_synth.lambda = layered(s_lambda_opt, s_lambda, cfg, "lambda", sc_synth.lambda);
            sc_synth.segments = layered(s_segments_opt, s_segments, cfg, "segments", sc_synth.segments);
            sc_synth.max_targets = layered(s_max_targets_opt, s_max_targets, cfg, "max_targets", sc_synth.max_targets);
            sc_synth.seed = run.stage_seed;
            sc_synth.check();

            run.manifest.add_input(s_histories);
            run.manifest.add_input(s_scores);
            const auto histories = read_histories(s_histories);
            const auto scores = read_tract_scores(s_scores);
            const auto records = synthesize_sft(histories, scores, {*generator, *judge, merger ? *merger : *generator},
                                                sc_synth, g.jobs, *run.telemetry);
            std::vector<Json> rows;
            for (const auto& r : records) rows.push_back(to_json(r));
            write_jsonl(s_out, rows);
            run.manifest.add_output(s_out);
            run.finish(manifest_path_for(s_out));
            out << "wrote " << records.size() << " records for " << histories.size() << " users to " << s_out.string() << "\n";
        } else if (prune_cmd->parsed()) {
            auto run = start_run("prune", tail, g);
            auto table = CurriculumConfig::from_json(run.config(p_config));
            if (!p_preset.empty()) table.fallback = prune_preset(p_preset);
            run.manifest.add_input(p_scores);
            run.manifest.add_input(p_histories);
            const auto histories = read_histories(p_histories);
            const auto scores = read_score_sidecar(p_scores, table.probability_floor);
            const auto instances = build_rl_instances(histories, scores, table, *run.telemetry);
            std::vector<Json> rows;
            for (const auto& inst : instances) rows.push_back(to_json(inst));
            write_jsonl(p_out, rows);
            run.manifest.add_output(p_out);
            if (!p_kept.empty()) {
                std::vector<Json> kept;
                std::map<std::string, std::vector<SampleScore>> by_dataset;
                std::map<std::string, std::string> tag_of;
                for (const auto& h : histories) tag_of[h.user_id] = h.dataset_tag;
                for (const auto& s : scores) {
                    if (tag_of.count(s.user_id)) by_dataset[tag_of[s.user_id]].push_back(s);
                }
                for (const auto& [tag, rows_in] : by_dataset) {
                    for (const auto& s : prune(rows_in, table.for_dataset(tag))) {
                        kept.push_back(Json{{"user_id", s.user_id}, {"index", s.index}, {"s_tract", s.s_tract},
                                            {"s_learn", s.s_learn}, {"dataset_tag", tag}});
                    }
                }
                write_jsonl(p_kept, kept);
                run.manifest.add_output(p_kept);
            }
            run.finish(manifest_path_for(p_out));
            out << "wrote " << instances.size() << " RL instances from " << scores.size() << " scored samples to "
                << p_out.string() << "\n";
        } else if (rollout_cmd->parsed()) {
            auto run = start_run("rollout", tail, g);
            auto policy = run.client(r_policy);
            auto judge = run.client(r_judge);
            run.manifest.add_input(r_instances);
            run.manifest.add_input(r_histories);
            std::vector<RlInstance> instances;
            for (const auto& j : read_jsonl(r_instances)) instances.push_back(rl_instance_from_json(j));
            const auto histories = read_histories(r_histories);
            RolloutConfig rc;
            rc.group_size = r_group;
            rc.gamma = r_gamma;
            rc.credit = r_credit == "all" ? FutureCredit::AllInitials : FutureCredit::SelectedOnly;
            rc.seed = run.stage_seed;
            const auto trees = run_rollouts(instances, histories, *policy, *judge, rc, g.jobs, *run.telemetry);
            const auto batch = export_batch(trees);
            write_batch(r_out, batch);
            run.manifest.add_output(r_out);
            if (!r_trees.empty()) {
                std::vector<Json> rows;
                for (const auto& t : trees) {
                    Json j = to_json(t.tree);
                    j["immediate"] = Json{{"initial", t.immediate.initial}, {"updated", t.immediate.updated}};
                    j["cumulative"] = Json{{"initial", t.cumulative.initial}, {"updated", t.cumulative.updated}};
                    j["advantage"] = Json{{"initial", t.advantage.initial}, {"updated", t.advantage.updated}};
                    rows.push_back(std::move(j));
                }
                write_jsonl(r_trees, rows);
                run.manifest.add_output(r_trees);
            }
            run.finish(manifest_path_for(r_out));
            out << "wrote " << batch.size() << " training records from " << trees.size() << " trees to "
                << r_out.string() << "\n";
        } else if (loss_cmd->parsed()) {
            auto run = start_run("loss-check", tail, g);
            run.manifest.add_input(l_batch);
            run.manifest.add_input(l_new);
            const double eps = parse_eps(l_eps);
            const auto batch = read_batch(l_batch);
            const auto fresh = read_logprob_rows(l_new);
            const double loss = surrogate_loss(batch, fresh, eps);
            char buf[64];
            const auto res = std::to_chars(buf, buf + sizeof buf, loss);
            out << "loss " << std::string(buf, res.ptr) << " over " << batch.size() << " records\n";
            if (!l_out.empty()) {
                write_text_atomic(l_out, Json{{"loss", loss}, {"records", batch.size()}, {"clip_eps", l_eps}}.dump(2) + "\n");
                run.manifest.add_output(l_out);
                run.finish(manifest_path_for(l_out));
            }
        } else if (stream_cmd->parsed()) {
            auto run = start_run("stream-infer", tail, g);
            auto generator = run.client(st_generator);
            run.manifest.add_input(st_histories);
            fs::create_directories(st_state_dir);
            const auto state_file = st_state_dir / "states.jsonl";
            if (fs::exists(state_file)) run.manifest.add_input(state_file);
            const auto histories = read_histories(st_histories);
            auto states = stream_users(histories, *generator, st_chunks, load_states(state_file), g.jobs, *run.telemetry);
            save_states(state_file, states);
            run.manifest.add_output(state_file);
            if (!st_out.empty()) {
                std::vector<Json> rows;
                for (const auto& [user, s] : states) {
                    rows.push_back(Json{{"user_id", user}, {"summary", s.current->text}, {"lineage", s.lineage},
                                        {"frontier", s.consumed_until}});
                }
                write_jsonl(st_out, rows);
                run.manifest.add_output(st_out);
            }
            run.finish(st_state_dir / "manifest.json");
            out << "streamed " << histories.size() << " users; " << states.size() << " states in "
                << state_file.string() << "\n";
        } else if (cross->parsed()) {
            auto run = start_run("build-transfer cross-domain", tail, g);
            auto embedder = run.client(x_embedder);
            for (const auto& p : {x_a, x_b, x_ta, x_tb}) run.manifest.add_input(p);
            const auto ha = read_histories(x_a);
            const auto hb = read_histories(x_b);
            const auto match = match_users(ha, hb, *embedder, x_top_k, g.jobs);
            const auto instances = swap_targets(match.pairs, read_targets(x_ta), read_targets(x_tb), run.telemetry.get());
            std::vector<Json> rows;
            for (const auto& inst : instances) rows.push_back(to_json(inst));
            write_jsonl(x_out, rows);
            run.manifest.add_output(x_out);
            if (!x_pairs.empty()) {
                write_text_atomic(x_pairs, to_json(match).dump(2) + "\n");
                run.manifest.add_output(x_pairs);
            }
            run.finish(manifest_path_for(x_out));
            out << "matched " << match.pairs.size() << " pairs (" << match.repeated_users.size()
                << " users repeated); wrote " << instances.size() << " instances to " << x_out.string() << "\n";
        } else if (multi->parsed()) {
            auto run = start_run("build-transfer multi-interest", tail, g);
            run.manifest.add_input(m_histories);
            const auto primaries = read_histories(m_histories);
            std::vector<UserHistory> donors;
            if (!m_donors.empty()) {
                run.manifest.add_input(m_donors);
                donors = read_histories(m_donors);
            } else {
                donors = primaries;
            }
            const auto fused = inject_corpus(primaries, donors, {m_intensity, run.stage_seed}, run.telemetry.get());
            std::vector<UserHistory> histories;
            std::vector<Json> provenance;
            for (const auto& f : fused) {
                histories.push_back(f.history);
                provenance.push_back(provenance_json(f));
            }
            write_histories(m_out, histories);
            auto prov_path = m_out;
            prov_path += ".provenance.jsonl";
            write_jsonl(prov_path, provenance);
            run.manifest.add_output(m_out);
            run.manifest.add_output(prov_path);
            run.finish(manifest_path_for(m_out));
            out << "wrote " << histories.size() << " fused histories to " << m_out.string() << "\n";
        } else if (positive->parsed()) {
            auto run = start_run("build-transfer positive-only", tail, g);
            run.manifest.add_input(po_histories);
            std::vector<UserHistory> histories;
            for (const auto& h : read_histories(po_histories)) histories.push_back(strip_negatives(h));
            write_histories(po_out, histories);
            run.manifest.add_output(po_out);
            run.finish(manifest_path_for(po_out));
            out << "wrote " << histories.size() << " positive-only histories to " << po_out.string() << "\n";
        } else if (eval_cmd->parsed()) {
            auto run = start_run("evaluate", tail, g);
            if (e_summaries.empty() && e_histories.empty()) {
                throw ConfigError("evaluate needs --summaries, or --histories with --generator");
            }
            auto downstream = run.client(e_downstream);
            run.manifest.add_input(e_instances);
            const auto instances = read_eval_instances(e_instances);
            EvalOptions opts;
            opts.seed = run.stage_seed;
            opts.randomize_positions = !e_fixed_positions;
            opts.dataset_tag = e_tag;
            Json report;
            if (!e_summaries.empty()) {
                run.manifest.add_input(e_summaries);
                const auto r = evaluate_selection(instances, read_summaries(e_summaries), *downstream, opts, g.jobs,
                                                  run.telemetry.get());
                report = to_json(r);
                out << format_report(r);
            } else {
                auto generator = run.client(e_generator);
                run.manifest.add_input(e_histories);
                const auto cmp = compare_protocols(read_histories(e_histories), instances, *generator, *downstream, opts,
                                                   e_chunks, g.jobs, run.telemetry.get());
                report = Json{{"full_history", to_json(cmp.full)}, {"streaming", to_json(cmp.streaming)}};
                out << format_report(cmp.full, "full-history") << "\n" << format_report(cmp.streaming, "streaming");
            }
            write_text_atomic(e_out, report.dump(2) + "\n");
            run.manifest.add_output(e_out);
            run.finish(manifest_path_for(e_out));
        } else if (sim->parsed()) {
            auto run = start_run("simlab-gen", tail, g);
            Json cfg = Json::object();
            if (!g_config.empty()) cfg = run.config(g_config);
            const simlab::SimConfig defaults;
            sc.n_users = layered(g_users, sc.n_users, cfg, "users", defaults.n_users);
            sc.dim = layered(g_dim, sc.dim, cfg, "dim", defaults.dim);
            sc.history_len = layered(g_len, sc.history_len, cfg, "history_len", defaults.history_len);
            sc.pair_margin = layered(g_margin, sc.pair_margin, cfg, "margin", defaults.pair_margin);
            sc.eval_targets = layered(g_targets, sc.eval_targets, cfg, "targets", defaults.eval_targets);
            sc.strong_kappa = layered(g_strong, sc.strong_kappa, cfg, "strong_kappa", defaults.strong_kappa);
            sc.weak_kappa = layered(g_weak, sc.weak_kappa, cfg, "weak_kappa", defaults.weak_kappa);
            sc.weak_quality = layered(g_weak_q, sc.weak_quality, cfg, "weak_quality", defaults.weak_quality);
            sc.dataset_tag = layered(g_tag, sc.dataset_tag, cfg, "dataset_tag", defaults.dataset_tag);
            sc.seed = run.stage_seed;
            const auto population = simlab::gen_population(sc);
            simlab::write_population(g_out_dir, population);
            write_simlab_endpoints(g_out_dir);
            for (const auto* name : {"histories.jsonl", "ground_truth.jsonl", "targets.jsonl", "scores.jsonl"}) {
                run.manifest.add_output(g_out_dir / name);
            }
            run.finish(g_out_dir / "manifest.json");
            out << "generated " << population.users.size() << " users in " << g_out_dir.string() << "\n";
        }
    } catch (const std::exception& e) {
        err << "error (" << category(e) << "): " << e.what() << "\n";
        return kExitStageError;
    }
    return kExitOk;
}

} // namespace prefstream

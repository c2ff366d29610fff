#pragma once

// Command-line front end: synth, select, condense, eval, export-dot.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hc/condense.hpp"
#include "hc/condensed.hpp"
#include "hc/eval.hpp"
#include "hc/io.hpp"
#include "hc/spectral.hpp"
#include "hc/synth.hpp"

namespace hc::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

#ifndef HC_VERSION
#define HC_VERSION "dev"
#endif

enum ExitCode { kOk = 0, kIoError = 1, kConfigError = 2, kNumericalError = 3 };

inline std::shared_ptr<spdlog::logger> logger() {
    static auto log = [] {
        auto l = spdlog::get("hc");
        if (!l) l = spdlog::stderr_color_mt("hc");
        l->set_pattern("[%l] %v");
        spdlog::level::level_enum level = spdlog::level::info;
        if (const char* env = std::getenv("GC_LOG")) level = spdlog::level::from_str(env);
        l->set_level(level);
        return l;
    }();
    return log;
}

inline std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// manifest.json: everything needed to replay the command.
struct RunManifest {
    std::string command;
    std::vector<std::string> args;  // argv after the program name, --out removed
    std::string config_hash;
    std::string config_text;
    std::uint64_t seed = 0;
    std::string started;
    std::vector<std::string> outputs;  // relative to the output directory

    void write(const fs::path& dir) const {
        json j{{"command", command},
               {"args", args},
               {"config_hash", config_hash},
               {"config", config_text},
               {"seed", seed},
               {"version", HC_VERSION},
               {"started", started},
               {"finished", utc_now()},
               {"outputs", outputs}};
        io::write_json(dir / "manifest.json", j);
    }
};

struct GlobalOptions {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string config;
    std::string out;
    int threads = 1;
};

namespace detail {

inline std::vector<std::string> replay_args(const std::vector<std::string>& argv) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < argv.size(); ++i) {
        if (argv[i] == "--out") {
            ++i;
            continue;
        }
        if (argv[i].rfind("--out=", 0) == 0) continue;
        out.push_back(argv[i]);
    }
    return out;
}

inline fs::path require_out(const GlobalOptions& g) {
    if (g.out.empty()) throw ConfigError("--out is required");
    fs::create_directories(g.out);
    return g.out;
}

inline CondenseConfig load_config(const GlobalOptions& g, const std::vector<std::pair<std::string, std::string>>& overrides) {
    CondenseConfig cfg;
    if (!g.config.empty()) apply_config_file(cfg, g.config);
    for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
    if (g.seed_set) cfg.seed = g.seed;
    cfg.validate();
    return cfg;
}

inline json selection_json(const SelectionResult& sel, const SimilarityScores* scores) {
    json j{{"selected", sel.selected}, {"per_class_budget", sel.per_class_budget}};
    if (scores && scores->mean_similarity.size() > 0) {
        const Vector& s = scores->mean_similarity;
        j["mean_similarity_stats"] = {{"min", io::round_sig(s.minCoeff())},
                                      {"max", io::round_sig(s.maxCoeff())},
                                      {"mean", io::round_sig(s.mean())}};
    } else {
        j["mean_similarity_stats"] = json::object();
    }
    return j;
}

}  // namespace detail

/// Parses and runs one command; returns the process exit code.
inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout) {
    CLI::App app{"Graph condensation with hyperbolic structure learning and spectral node selection", "hypcondense"};
    app.set_version_flag("--version", HC_VERSION);
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions global;
    app.add_option("--seed", global.seed, "random seed (overrides the config file)")->each([&](const std::string&) { global.seed_set = true; });
    app.add_option("--config", global.config, "key = value config file");
    app.add_option("--out", global.out, "output directory");
    app.add_option("--threads", global.threads, "worker threads for independent repeats")->check(CLI::PositiveNumber);

    std::string started = utc_now();
    RunManifest manifest;
    manifest.args = detail::replay_args(argv);
    manifest.started = started;

    // synth ---------------------------------------------------------------
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic graph bundle");
    std::string synth_kind = "sbm";
    synth::SbmSpec sbm_spec;
    synth::BaSpec ba_spec;
    Index features = 32, classes = 4;
    double signal = 1.0, noise = 1.0;
    synth_cmd->add_option("--kind", synth_kind, "sbm or ba")->check(CLI::IsMember({"sbm", "ba"}));
    synth_cmd->add_option("--nodes", sbm_spec.num_nodes, "number of nodes")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--blocks", sbm_spec.blocks, "SBM blocks (= classes)")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--p-in", sbm_spec.p_in, "SBM within-block edge probability");
    synth_cmd->add_option("--p-out", sbm_spec.p_out, "SBM between-block edge probability");
    synth_cmd->add_option("--m", ba_spec.m, "BA edges per new node")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--classes", classes, "BA label classes")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--features", features, "feature dimension")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--signal", signal, "class centroid scale");
    synth_cmd->add_option("--noise", noise, "per-node feature noise");

    // select --------------------------------------------------------------
    auto* select_cmd = app.add_subcommand("select", "spectral node selection for a budget");
    std::string data_dir;
    std::vector<std::pair<std::string, std::string>> overrides;
    select_cmd->add_option("--data", data_dir, "graph bundle directory")->required();

    // condense ------------------------------------------------------------
    auto* condense_cmd = app.add_subcommand("condense", "condense a graph bundle");
    condense_cmd->add_option("--data", data_dir, "graph bundle directory")->required();
    for (auto* cmd : {select_cmd, condense_cmd}) {
        cmd->add_option_function<std::string>(
               "--rate", [&overrides](const std::string& v) { overrides.emplace_back("reduction_rate", v); }, "alias of --reduction_rate")
            ->type_name("VALUE");
        for (const auto& key : config_keys()) {
            if (key.name == "seed") continue;
            CondenseConfig defaults;
            cmd->add_option_function<std::string>(
                   "--" + key.name, [&overrides, name = key.name](const std::string& v) { overrides.emplace_back(name, v); },
                   key.help + " [default: " + key.get(defaults) + "]")
                ->type_name("VALUE");
        }
    }

    // eval ----------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "evaluate an original or condensed graph");
    eval_cmd->require_subcommand(1);
    std::string condensed_dir;
    int runs = 10;
    int epochs = 1000;
    double edge_threshold = 0.5;
    std::optional<double> report_rate;
    auto add_common = [&](CLI::App* cmd, bool need_data) {
        auto* d = cmd->add_option("--data", data_dir, "original graph bundle directory");
        if (need_data) d->required();
        cmd->add_option("--condensed", condensed_dir, "condensed artifact directory");
        cmd->add_option("--runs", runs, "seeded runs")->check(CLI::PositiveNumber);
        cmd->add_option("--edge-threshold", edge_threshold, "condensed weight counted as an edge");
        cmd->add_option("--rate", report_rate, "reduction rate recorded in the report");
    };
    auto* eval_lp = eval_cmd->add_subcommand("lp", "link prediction F1 (condensed-trained if --condensed is given)");
    add_common(eval_lp, true);
    auto* eval_mia = eval_cmd->add_subcommand("mia", "node membership inference attack accuracy");
    add_common(eval_mia, true);
    auto* eval_lmia = eval_cmd->add_subcommand("lmia", "link membership inference attack F1");
    add_common(eval_lmia, true);
    auto* eval_stats = eval_cmd->add_subcommand("stats", "node/edge counts and density");
    add_common(eval_stats, false);
    auto* eval_eff = eval_cmd->add_subcommand("efficiency", "LP training time and artifact size");
    add_common(eval_eff, false);
    eval_eff->add_option("--epochs", epochs, "LP training epochs to time")->check(CLI::PositiveNumber);

    // export-dot ----------------------------------------------------------
    auto* dot_cmd = app.add_subcommand("export-dot", "write a condensed graph as Graphviz DOT");
    double dot_threshold = 0.0;
    dot_cmd->add_option("--condensed", condensed_dir, "condensed artifact directory")->required();
    dot_cmd->add_option("--threshold", dot_threshold, "omit edges with weight at or below this");

    try {
        std::vector<std::string> reversed(argv.rbegin(), argv.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << HC_VERSION << "\n";
        return kOk;
    } catch (const CLI::ParseError& e) {
        logger()->error("{}", e.what());
        return kConfigError;
    }

    auto log = logger();
    try {
        if (synth_cmd->parsed()) {
            const auto dir = detail::require_out(global);
            GraphBundle g;
            const synth::FeatureSpec fs_spec{features, signal, noise};
            if (synth_kind == "sbm") {
                sbm_spec.features = fs_spec;
                sbm_spec.seed = global.seed;
                g = synth::sbm(sbm_spec);
            } else {
                ba_spec.num_nodes = sbm_spec.num_nodes;
                ba_spec.classes = classes;
                ba_spec.features = fs_spec;
                ba_spec.seed = global.seed;
                g = synth::barabasi_albert(ba_spec);
            }
            io::save_bundle(g, dir);
            log->info("synth: {} nodes, {} edges, {} classes -> {}", g.num_nodes, g.num_edges(), g.num_classes, dir.string());
            manifest.command = "synth";
            manifest.seed = global.seed;
            manifest.outputs = {"meta.json", "edges.tsv", "features.f32", "labels.tsv", "split.json"};
            manifest.write(dir);
            return kOk;
        }

        if (select_cmd->parsed()) {
            const auto cfg = detail::load_config(global, overrides);
            const auto dir = detail::require_out(global);
            const auto g = io::load_bundle(data_dir);
            const auto budget = budget_from_rate(g, cfg.reduction_rate);
            SimilarityScores scores;
            const auto sel = select_for_condensation(g, budget, cfg, &scores);
            io::write_json(dir / "selection.json", detail::selection_json(sel, &scores));
            log->info("select: {} nodes ({})", sel.selected.size(), cfg.selection);
            manifest.command = "select";
            manifest.config_hash = config_hash(cfg);
            manifest.config_text = config_to_text(cfg);
            manifest.seed = cfg.seed;
            manifest.outputs = {"selection.json"};
            manifest.write(dir);
            return kOk;
        }

        if (condense_cmd->parsed()) {
            const auto cfg = detail::load_config(global, overrides);
            const auto dir = detail::require_out(global);
            const auto g = io::load_bundle(data_dir);
            log->info("condense: {} ({} nodes), rate {}, {} repeat(s) x {} epochs", g.name, g.num_nodes, cfg.reduction_rate, cfg.repeats,
                      cfg.epochs);
            const Validator base = lp_validator(g, cfg);
            Validator validator;
            if (base) {
                validator = [&](const CondensedGraph& c) {
                    const double f1 = base(c);
                    log->debug("repeat {} epoch {}: validation F1 {:.4f}", c.best_repeat, c.best_epoch, f1);
                    return f1;
                };
            }
            const auto res = condense(g, cfg, validator, global.threads);
            json extra{{"budget", res.budget}, {"reduction_rate", cfg.reduction_rate}, {"config", config_to_text(cfg)}};
            io::save_condensed(res.graph, dir, res.history, &res.net, extra);
            io::write_json(dir / "selection.json", detail::selection_json(res.selection, nullptr));
            log->info("condense: {} nodes, repeat {} epoch {}, validation F1 {}", res.graph.num_nodes(), res.graph.best_repeat,
                      res.graph.best_epoch, res.graph.val_f1);
            manifest.command = "condense";
            manifest.config_hash = config_hash(cfg);
            manifest.config_text = config_to_text(cfg);
            manifest.seed = cfg.seed;
            manifest.outputs = {"meta.json", "adj.f32", "features.f32", "labels.tsv", "history.csv", "net.json", "net.f32", "selection.json"};
            manifest.write(dir);
            return kOk;
        }

        if (eval_cmd->parsed()) {
            const auto dir = detail::require_out(global);
            std::optional<GraphBundle> g;
            if (!data_dir.empty()) g = io::load_bundle(data_dir);
            std::optional<CondensedGraph> cg;
            if (!condensed_dir.empty()) cg = io::load_condensed(condensed_dir);
            const std::string dataset = g ? g->name : cg ? cg->provenance.dataset : "";
            const double rate_value = report_rate ? *report_rate : std::nan("");
            const std::uint64_t seed = global.seed;
            json report;
            std::string file = "report.json";

            if (eval_lp->parsed()) {
                LpConfig lp;
                lp.edge_threshold = edge_threshold;
                const auto r = evaluate_lp(*g, cg ? &*cg : nullptr, runs, seed, lp);
                report = report_json("lp", dataset, rate_value, r);
                report["trained_on"] = cg ? "condensed" : "original";
                log->info("lp F1 {}", r.format());
                out << r.format() << "\n";
            } else if (eval_lmia->parsed()) {
                const Rng root(seed);
                const auto split = split_edges(*g, root.split("lmia.split"));
                LpConfig lp;
                lp.edge_threshold = edge_threshold;
                const auto target = cg ? train_lp(*cg, lp, root.split("lmia.target")) : train_lp(*g, split, lp, root.split("lmia.target"));
                const auto r = attack_lmia(target, *g, split, runs, root.split("lmia.attack"));
                report = report_json("lmia", dataset, rate_value, r);
                report["trained_on"] = cg ? "condensed" : "original";
                log->info("lmia F1 {}", r.format());
                out << r.format() << "\n";
            } else if (eval_mia->parsed()) {
                const Rng root(seed);
                const auto target = cg ? train_classifier(*cg, {}, root.split("mia.target")) : train_classifier(*g, {}, root.split("mia.target"));
                const auto r = attack_mia(target, *g, runs, root.split("mia.attack"));
                report = report_json("mia", dataset, rate_value, r);
                report["trained_on"] = cg ? "condensed" : "original";
                log->info("mia accuracy {}", r.format());
                out << r.format() << "\n";
            } else if (eval_stats->parsed()) {
                if (!g && !cg) throw ConfigError("eval stats needs --data or --condensed");
                const GraphStats s = cg ? stats(cg->adjacency, edge_threshold) : stats(*g);
                report = {{"task", "stats"}, {"dataset", dataset}, {"nodes", s.nodes}, {"edges", s.edges},
                          {"density", io::round_sig(s.density)}};
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * s.density);
                report["density_percent"] = buf;
                file = "stats.json";
                out << s.nodes << " nodes, " << s.edges << " edges, density " << buf << "\n";
            } else if (eval_eff->parsed()) {
                if (!g && !cg) throw ConfigError("eval efficiency needs --data or --condensed");
                report = {{"task", "efficiency"}, {"dataset", dataset}, {"epochs", epochs}};
                if (g) {
                    const auto e = measure_efficiency(*g, data_dir, epochs, seed);
                    report["original"] = {{"seconds", io::round_sig(e.seconds)}, {"bytes", e.bytes}};
                }
                if (cg) {
                    const auto e = measure_efficiency(*cg, condensed_dir, epochs, seed, edge_threshold);
                    report["condensed"] = {{"seconds", io::round_sig(e.seconds)}, {"bytes", e.bytes}};
                }
                if (g && cg) {
                    report["speedup"] = io::round_sig(report["original"]["seconds"].get<double>() / report["condensed"]["seconds"].get<double>());
                    report["storage_ratio"] =
                        io::round_sig(report["original"]["bytes"].get<double>() / report["condensed"]["bytes"].get<double>());
                }
                out << report.dump() << "\n";
            }
            io::write_json(dir / file, report);
            manifest.command = "eval";
            manifest.seed = seed;
            manifest.outputs = {file};
            manifest.write(dir);
            return kOk;
        }

        if (dot_cmd->parsed()) {
            const auto dir = detail::require_out(global);
            const auto cg = io::load_condensed(condensed_dir);
            export_dot(cg.adjacency, cg.labels, dir / "graph.dot", dot_threshold);
            manifest.command = "export-dot";
            manifest.seed = global.seed;
            manifest.outputs = {"graph.dot"};
            manifest.write(dir);
            return kOk;
        }
    } catch (const ConfigError& e) {
        log->error("{}", e.what());
        return kConfigError;
    } catch (const NumericalError& e) {
        log->error("{}", e.what());
        return kNumericalError;
    } catch (const std::exception& e) {
        log->error("{}", e.what());
        return kIoError;
    }
    return kOk;
}

}  // namespace hc::cli

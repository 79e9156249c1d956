#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ctxfaith/corpus.hpp"
#include "ctxfaith/counterfactual.hpp"
#include "ctxfaith/harness.hpp"
#include "ctxfaith/llm_gateway.hpp"
#include "ctxfaith/util.hpp"

using namespace ctxfaith;

namespace {

int cmd_generate(const std::string& task, const std::string& in, const std::string& out,
                 std::uint64_t seed, const std::string& idk_text, bool strict) {
    std::size_t generated = 0, skipped = 0;
    auto note_skip = [&](const std::string& id, const std::exception& e) {
        if (strict) throw std::runtime_error("instance '" + id + "': " + e.what());
        std::fprintf(stderr, "skip %s: %s\n", id.c_str(), e.what());
        ++skipped;
    };

    if (task == "mrc") {
        auto ds = load_dataset<MrcInstance>(in);
        auto inventory = build_entity_inventory(ds);
        std::vector<MrcCounterfactual> records;
        for (const auto& inst : ds.items) {
            try {
                records.push_back(substitute_mrc(inst, inventory, seed));
                ++generated;
            } catch (const std::exception& e) {
                note_skip(inst.id, e);
            }
        }
        save_counterfactuals(records, out);
    } else if (task == "re") {
        auto ds = load_dataset<ReInstance>(in);
        std::vector<ReCounterfactual> records;
        for (const auto& inst : ds.items) {
            try {
                records.push_back(swap_re(inst, ds, seed));
                ++generated;
            } catch (const std::exception& e) {
                note_skip(inst.id, e);
            }
        }
        save_counterfactuals(records, out);
    } else if (task == "abstention") {
        auto ds = load_dataset<ChoiceInstance>(in);
        ChoiceDataset augmented;
        for (const auto& inst : ds.items) {
            try {
                augmented.items.push_back(augment_abstention(inst, idk_text));
                ++generated;
            } catch (const std::exception& e) {
                note_skip(inst.id, e);
            }
        }
        save_dataset(augmented, out);
    } else {
        throw std::runtime_error("unknown generate task '" + task +
                                 "' (expected mrc, re or abstention)");
    }

    std::printf("generated %zu of %zu (%zu skipped) -> %s\n", generated, generated + skipped,
                skipped, out.c_str());
    return 0;
}

int cmd_filter(const std::string& schema, const std::string& in, const std::string& out,
               std::string manifest, const std::string& probe_template, const std::string& backend,
               const std::string& mock_fixture, const std::string& http_url,
               const std::string& model_id, const std::string& cache_path, int workers,
               int max_tokens) {
    std::unique_ptr<CompletionBackend> be;
    if (backend == "mock") {
        if (mock_fixture.empty()) throw std::runtime_error("--backend mock requires --mock-fixture");
        be = std::make_unique<MockBackend>(MockBackend::from_fixture(mock_fixture));
    } else if (backend == "http") {
        if (http_url.empty()) throw std::runtime_error("--backend http requires --http-url");
        be = std::make_unique<HttpBackend>(http_url);
    } else {
        throw std::runtime_error("unknown backend '" + backend + "' (expected mock or http)");
    }
    std::optional<ResponseCache> cache;
    if (!cache_path.empty()) cache.emplace(cache_path);
    Gateway gateway(*be, cache ? &*cache : nullptr);
    if (manifest.empty()) manifest = out + ".manifest.json";

    std::size_t total = 0, kept = 0;
    FilterOutcome outcome;
    if (schema == "mrc") {
        auto ds = load_dataset<MrcInstance>(in);
        outcome = closed_book_filter(ds, gateway, model_id, probe_template, max_tokens, workers);
        save_dataset(apply_filter(ds, outcome), out);
        total = ds.size();
    } else if (schema == "re") {
        auto ds = load_dataset<ReInstance>(in);
        outcome = closed_book_filter(ds, gateway, model_id, probe_template, max_tokens, workers);
        save_dataset(apply_filter(ds, outcome), out);
        total = ds.size();
    } else {
        throw std::runtime_error("filter supports schema mrc or re, got '" + schema + "'");
    }
    kept = outcome.kept_ids.size();
    save_filter_manifest(outcome, manifest);

    for (const auto& [id, message] : outcome.errors)
        std::fprintf(stderr, "probe error %s: %s\n", id.c_str(), message.c_str());
    if (kept == 0) std::fprintf(stderr, "warning: closed-book filter kept 0 of %zu instances\n", total);
    std::printf("kept %zu of %zu -> %s (manifest: %s)\n", kept, total, out.c_str(),
                manifest.c_str());
    return 0;
}

int cmd_run(ExperimentConfig config, bool allow_partial) {
    validate_config(config);  // normalize up front so emitted reports echo effective settings
    RunOutput out = run_experiment(config);
    if (!config.output_dir.empty()) emit_report(out, config);

    for (const auto& tr : out.per_template) {
        std::string line = to_string(tr.kind) + ": n=" + std::to_string(tr.report.n.evaluated) + "/" +
                           std::to_string(tr.report.n.total);
        auto add = [&line](const char* name, const std::optional<double>& v) {
            if (!v) return;
            char buf[48];
            std::snprintf(buf, sizeof buf, " %s=%.2f", name, *v * 100.0);
            line += buf;
        };
        add("p_s", tr.report.p_s);
        add("p_o", tr.report.p_o);
        add("m_r", tr.report.m_r);
        add("em", tr.report.em);
        add("f1", tr.report.f1);
        add("acc_all", tr.report.acc_all);
        if (tr.report.brier) {
            char buf[48];
            std::snprintf(buf, sizeof buf, " brier=%.4f", *tr.report.brier);
            line += buf;
        }
        std::printf("%s\n", line.c_str());
    }
    std::printf("coverage %.2f%% | backend calls %zu, cache hits %zu, retries %zu\n",
                out.coverage * 100.0, out.stats.backend_calls, out.stats.cache_hits,
                out.stats.retries);
    if (!config.output_dir.empty()) std::printf("reports written to %s\n", config.output_dir.c_str());

    if (out.coverage < 1.0 && !allow_partial) {
        std::fprintf(stderr, "error: coverage below 100%% (use --allow-partial to accept)\n");
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"context-faithfulness evaluation harness"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "derive counterfactual / abstention instances");
    std::string gen_task, gen_in, gen_out, gen_idk = "I don't know";
    std::uint64_t gen_seed = 0;
    bool gen_strict = false;
    gen->add_option("--task", gen_task, "mrc | re | abstention")->required();
    gen->add_option("--in", gen_in, "input dataset (JSONL)")->required();
    gen->add_option("--out", gen_out, "output path (JSONL)")->required();
    gen->add_option("--seed", gen_seed, "sampling seed");
    gen->add_option("--idk-text", gen_idk, "abstention choice text");
    gen->add_flag("--strict", gen_strict, "fail on the first ungenerable instance");

    // filter
    auto* flt = app.add_subcommand("filter", "keep instances the model answers closed-book");
    std::string flt_schema = "mrc", flt_in, flt_out, flt_manifest, flt_backend = "mock";
    std::string flt_probe = "Q: {q}? A:", flt_fixture, flt_url, flt_model = "mock-model", flt_cache;
    int flt_workers = 4, flt_max_tokens = 32;
    flt->add_option("--schema", flt_schema, "mrc | re");
    flt->add_option("--in", flt_in, "input dataset (JSONL)")->required();
    flt->add_option("--out", flt_out, "filtered subset path")->required();
    flt->add_option("--manifest", flt_manifest, "kept/dropped manifest path (default <out>.manifest.json)");
    flt->add_option("--probe-template", flt_probe, "closed-book probe; must contain {q}");
    flt->add_option("--backend", flt_backend, "mock | http");
    flt->add_option("--mock-fixture", flt_fixture, "mock backend fixture (JSONL)");
    flt->add_option("--http-url", flt_url, "completion endpoint base URL");
    flt->add_option("--model", flt_model, "model identifier");
    flt->add_option("--cache", flt_cache, "response cache path");
    flt->add_option("--workers", flt_workers, "concurrent probes");
    flt->add_option("--max-tokens", flt_max_tokens, "probe completion budget");

    // run
    auto* run = app.add_subcommand("run", "run the template grid and write reports");
    std::string run_config;
    std::vector<std::string> run_sets;
    bool allow_partial = false, dump_prompts = false;
    std::string o_schema, o_templates, o_condition, o_backend, o_score, o_embed, o_counter, o_orig,
        o_pool, o_fixture, o_url, o_model, o_outdir, o_cache, o_narrator, o_instruction_file;
    int o_demo_k = -1;
    std::int64_t o_seed = -1;
    run->add_option("--config", run_config, "key = value config file");
    run->add_option("--set", run_sets, "extra key=value override (repeatable)");
    run->add_option("--schema", o_schema, "mrc | re | choice");
    run->add_option("--template", o_templates, "comma list: base,attr,instr,opin,opin_instr");
    run->add_option("--demo-condition", o_condition, "zero_shot | original_demos | counterfactual_demos");
    run->add_option("--demo-k", o_demo_k, "demonstrations per prompt (max 16)");
    run->add_option("--backend", o_backend, "mock | http");
    run->add_option("--score-mode", o_score, "joint | per_token | unconditional");
    run->add_option("--embedding-provider", o_embed, "hash | http");
    run->add_option("--counterfactual", o_counter, "test set path");
    run->add_option("--original", o_orig, "original dataset path");
    run->add_option("--demo-pool", o_pool, "demonstration pool path");
    run->add_option("--mock-fixture", o_fixture, "mock backend fixture");
    run->add_option("--http-url", o_url, "completion endpoint base URL");
    run->add_option("--model", o_model, "model identifier");
    run->add_option("--out", o_outdir, "output directory for reports");
    run->add_option("--cache", o_cache, "response cache path");
    run->add_option("--seed", o_seed, "run seed");
    run->add_option("--narrator", o_narrator, "narrator name for opinion templates");
    run->add_option("--instruction-file", o_instruction_file, "file holding the instruction text");
    run->add_flag("--dump-prompts", dump_prompts, "also write prompts.jsonl");
    run->add_flag("--allow-partial", allow_partial, "exit 0 even when coverage < 100%");

    // report
    auto* rep = app.add_subcommand("report", "merge finished runs into a sweep table and chart");
    std::string rep_out;
    std::vector<std::string> rep_dirs;
    rep->add_option("--out", rep_out, "output directory")->required();
    rep->add_option("dirs", rep_dirs, "run directories containing report.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(gen_task, gen_in, gen_out, gen_seed, gen_idk, gen_strict);
        if (flt->parsed())
            return cmd_filter(flt_schema, flt_in, flt_out, flt_manifest, flt_probe, flt_backend,
                              flt_fixture, flt_url, flt_model, flt_cache, flt_workers,
                              flt_max_tokens);
        if (run->parsed()) {
            ExperimentConfig config;
            if (!run_config.empty()) config = config_from_file(run_config);
            for (const auto& kv : run_sets) {
                std::size_t eq = kv.find('=');
                if (eq == std::string::npos)
                    throw std::runtime_error("--set expects key=value, got '" + kv + "'");
                apply_config_kv(config, kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (!o_schema.empty()) apply_config_kv(config, "schema", o_schema);
            if (!o_templates.empty()) apply_config_kv(config, "templates", o_templates);
            if (!o_condition.empty()) apply_config_kv(config, "demo_condition", o_condition);
            if (o_demo_k >= 0) config.demo_k = o_demo_k;
            if (!o_backend.empty()) config.backend = o_backend;
            if (!o_score.empty()) apply_config_kv(config, "score_mode", o_score);
            if (!o_embed.empty()) config.embedding_provider = o_embed;
            if (!o_counter.empty()) config.counterfactual_path = o_counter;
            if (!o_orig.empty()) config.original_path = o_orig;
            if (!o_pool.empty()) config.demo_pool_path = o_pool;
            if (!o_fixture.empty()) config.mock_fixture = o_fixture;
            if (!o_url.empty()) config.http_url = o_url;
            if (!o_model.empty()) config.model_id = o_model;
            if (!o_outdir.empty()) config.output_dir = o_outdir;
            if (!o_cache.empty()) config.cache_path = o_cache;
            if (o_seed >= 0) config.seed = static_cast<std::uint64_t>(o_seed);
            if (!o_narrator.empty()) config.narrator = o_narrator;
            if (!o_instruction_file.empty()) {
                std::string text = read_file(o_instruction_file);
                while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
                config.instruction = text;
            }
            if (dump_prompts) config.dump_prompts = true;
            return cmd_run(config, allow_partial);
        }
        if (rep->parsed()) {
            write_sweep_report(rep_dirs, rep_out);
            std::printf("sweep written to %s\n", rep_out.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

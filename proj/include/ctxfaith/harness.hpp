#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ctxfaith/corpus.hpp"
#include "ctxfaith/llm_gateway.hpp"
#include "ctxfaith/metrics.hpp"
#include "ctxfaith/prompting.hpp"
#include "ctxfaith/retrieval.hpp"

namespace ctxfaith {

enum class DemoCondition { zero_shot, original_demos, counterfactual_demos };

DemoCondition demo_condition_from_string(const std::string& s);
std::string to_string(DemoCondition c);

// Everything a grid run needs, loadable from a key=value file with CLI
// overrides. Fields double as config keys (same spelling).
struct ExperimentConfig {
    Schema schema = Schema::mrc;
    std::string original_path;        // source instances (demo pool under original_demos)
    std::string counterfactual_path;  // test set: counterfactual records, or choice instances
    std::string demo_pool_path;       // demonstration pool (counterfactual records / choice instances)
    std::vector<TemplateKind> templates{TemplateKind::Base};
    DemoCondition demo_condition = DemoCondition::zero_shot;
    int demo_k = 16;
    std::string backend = "mock";  // mock | http
    std::string mock_fixture;
    std::string http_url;
    std::string model_id = "mock-model";
    ScoreMode score_mode = ScoreMode::joint;
    std::string embedding_provider = "hash";  // hash | http
    std::string embedding_url;
    int embedding_dim = 256;
    std::uint64_t seed = 0;
    std::string output_dir;
    std::string cache_path;  // response-cache persistence; empty = in-memory only
    int workers = 4;
    int max_tokens = 64;
    int budget_tokens = 3600;  // few-shot prompt budget (estimated tokens)
    std::string idk_text = "I don't know";
    std::string negative_label = "no_relation";
    std::string narrator = "Bob";
    std::string instruction;  // empty = bundled default for dataset_id
    std::string dataset_id;   // nq | retacred | realtimeqa; empty = inferred from schema
    bool dump_prompts = false;
};

ExperimentConfig config_from_file(const std::string& path);
void apply_config_kv(ExperimentConfig& config, const std::string& key, const std::string& value);
// Normalizes (zero_shot forces demo_k = 0, empty dataset_id inferred from
// schema) and rejects invalid settings: demo_k > 16, missing referenced paths.
void validate_config(ExperimentConfig& config);

struct RunRecord {
    std::string instance_id;
    std::string prompt;  // full rendered text; serialized only under dump_prompts
    std::string prompt_sha256;
    std::vector<std::string> demo_ids;
    std::string completion;           // free-form runs
    std::vector<double> choice_probs; // choice runs
    int predicted_index = -1;
    int gold_index = -1;
    bool answerable = false;
    bool matched_original = false;
    bool matched_substituted = false;
    bool em = false;
    std::string predicted_label;  // re runs: completion mapped onto the label set
    std::string error;            // per-instance failure; excluded from metrics
    double elapsed_ms = 0.0;      // wall-clock; never serialized, reports stay byte-stable
};

struct TemplateResult {
    TemplateKind kind = TemplateKind::Base;
    MetricsReport report;
    std::vector<RunRecord> records;  // test-set order
};

struct RunOutput {
    std::vector<TemplateResult> per_template;
    double coverage = 1.0;  // evaluated / total across the grid
    GatewayStats stats;     // cache-warmth dependent; kept out of serialized reports
};

std::unique_ptr<CompletionBackend> make_backend(const ExperimentConfig& config);
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ExperimentConfig& config);

// Runs the template grid over the configured test set. Identical
// (config, fixtures, cache) produce byte-identical serialized reports.
RunOutput run_experiment(const ExperimentConfig& config);

struct FilterOutcome {
    std::vector<std::string> kept_ids;     // input order
    std::vector<std::string> dropped_ids;  // input order
    std::vector<std::pair<std::string, std::string>> errors;  // id -> message, input order
};

// Closed-book probe: ask each question without its context and keep instances
// whose completion contains an original answer. probe_template must contain
// "{q}". Backend errors drop the instance into `errors` and the run continues.
FilterOutcome closed_book_filter(const MrcDataset& dataset, Gateway& gateway,
                                 const std::string& model_id,
                                 const std::string& probe_template = "Q: {q}? A:",
                                 int max_tokens = 32, int workers = 4);
FilterOutcome closed_book_filter(const ReDataset& dataset, Gateway& gateway,
                                 const std::string& model_id,
                                 const std::string& probe_template = "Q: {q}? A:",
                                 int max_tokens = 32, int workers = 4);

MrcDataset apply_filter(const MrcDataset& dataset, const FilterOutcome& outcome);
ReDataset apply_filter(const ReDataset& dataset, const FilterOutcome& outcome);
void save_filter_manifest(const FilterOutcome& outcome, const std::string& path);

// Synthesized question for relation instances; rendered templates add the
// trailing question mark themselves.
std::string re_question(const ReInstance& instance);

std::string render_report_csv(const RunOutput& out, const ExperimentConfig& config);
std::string render_report_markdown(const RunOutput& out, const ExperimentConfig& config);
nlohmann::json report_json(const RunOutput& out, const ExperimentConfig& config);

// Writes report.csv / report.md / report.json / records.jsonl (and
// prompts.jsonl under dump_prompts) into config.output_dir.
void emit_report(const RunOutput& out, const ExperimentConfig& config);

// Merges report.json files from finished run directories into
// out_dir/sweep.csv plus a static out_dir/sweep.svg chart of the
// memorization ratio per run.
void write_sweep_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

}  // namespace ctxfaith

#include "ctxfaith/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "ctxfaith/counterfactual.hpp"
#include "ctxfaith/util.hpp"

namespace ctxfaith {

namespace fs = std::filesystem;
using nlohmann::json;

DemoCondition demo_condition_from_string(const std::string& s) {
    if (s == "zero_shot") return DemoCondition::zero_shot;
    if (s == "original_demos") return DemoCondition::original_demos;
    if (s == "counterfactual_demos") return DemoCondition::counterfactual_demos;
    throw std::runtime_error("unknown demo condition '" + s +
                             "' (expected zero_shot, original_demos or counterfactual_demos)");
}

std::string to_string(DemoCondition c) {
    switch (c) {
        case DemoCondition::zero_shot: return "zero_shot";
        case DemoCondition::original_demos: return "original_demos";
        case DemoCondition::counterfactual_demos: return "counterfactual_demos";
    }
    throw std::logic_error("unreachable");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': invalid integer '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': invalid integer '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw std::runtime_error("config key '" + key + "': invalid boolean '" + value + "'");
}

std::vector<TemplateKind> parse_templates(const std::string& value) {
    std::vector<TemplateKind> kinds;
    std::size_t start = 0;
    while (start <= value.size()) {
        std::size_t comma = value.find(',', start);
        std::string part = trim(comma == std::string::npos ? value.substr(start)
                                                           : value.substr(start, comma - start));
        if (!part.empty()) kinds.push_back(template_kind_from_string(part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return kinds;
}

void require_path(const std::string& key, const std::string& value) {
    if (value.empty()) throw std::runtime_error("config key '" + key + "' is required but empty");
    if (!fs::exists(value))
        throw std::runtime_error("config key '" + key + "': path does not exist: " + value);
}

}  // namespace

void apply_config_kv(ExperimentConfig& config, const std::string& key, const std::string& value) {
    if (key == "schema") config.schema = schema_from_string(value);
    else if (key == "original_path") config.original_path = value;
    else if (key == "counterfactual_path") config.counterfactual_path = value;
    else if (key == "demo_pool_path") config.demo_pool_path = value;
    else if (key == "templates") config.templates = parse_templates(value);
    else if (key == "demo_condition") config.demo_condition = demo_condition_from_string(value);
    else if (key == "demo_k") config.demo_k = parse_int(key, value);
    else if (key == "backend") config.backend = value;
    else if (key == "mock_fixture") config.mock_fixture = value;
    else if (key == "http_url") config.http_url = value;
    else if (key == "model_id") config.model_id = value;
    else if (key == "score_mode") config.score_mode = score_mode_from_string(value);
    else if (key == "embedding_provider") config.embedding_provider = value;
    else if (key == "embedding_url") config.embedding_url = value;
    else if (key == "embedding_dim") config.embedding_dim = parse_int(key, value);
    else if (key == "seed") config.seed = parse_u64(key, value);
    else if (key == "output_dir") config.output_dir = value;
    else if (key == "cache_path") config.cache_path = value;
    else if (key == "workers") config.workers = parse_int(key, value);
    else if (key == "max_tokens") config.max_tokens = parse_int(key, value);
    else if (key == "budget_tokens") config.budget_tokens = parse_int(key, value);
    else if (key == "idk_text") config.idk_text = value;
    else if (key == "negative_label") config.negative_label = value;
    else if (key == "narrator") config.narrator = value;
    else if (key == "instruction") config.instruction = value;
    else if (key == "dataset_id") config.dataset_id = value;
    else if (key == "dump_prompts") config.dump_prompts = parse_bool(key, value);
    else throw std::runtime_error("unknown config key '" + key + "'");
}

ExperimentConfig config_from_file(const std::string& path) {
    ExperimentConfig config;
    for_each_line(path, [&](std::size_t line_no, const std::string& raw) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') return;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key = value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            apply_config_kv(config, key, value);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return config;
}

void validate_config(ExperimentConfig& config) {
    if (config.templates.empty()) throw std::runtime_error("config: templates must be non-empty");
    if (config.demo_condition == DemoCondition::zero_shot) config.demo_k = 0;
    if (config.demo_k < 0) throw std::runtime_error("config: demo_k must be >= 0");
    if (config.demo_k > kMaxDemos)
        throw std::runtime_error("config: demo_k " + std::to_string(config.demo_k) + " exceeds the " +
                                 std::to_string(kMaxDemos) + "-demonstration cap");
    if (config.demo_condition != DemoCondition::zero_shot && config.demo_k == 0)
        throw std::runtime_error("config: demo condition " + to_string(config.demo_condition) +
                                 " requires demo_k >= 1");
    if (config.dataset_id.empty()) {
        switch (config.schema) {
            case Schema::mrc: config.dataset_id = "nq"; break;
            case Schema::re: config.dataset_id = "retacred"; break;
            case Schema::choice: config.dataset_id = "realtimeqa"; break;
        }
    }

    require_path("counterfactual_path", config.counterfactual_path);
    if (config.demo_condition != DemoCondition::zero_shot)
        require_path("demo_pool_path", config.demo_pool_path);
    if (config.demo_condition == DemoCondition::original_demos && config.schema != Schema::choice)
        require_path("original_path", config.original_path);

    if (config.backend == "mock") {
        require_path("mock_fixture", config.mock_fixture);
    } else if (config.backend == "http") {
        if (config.http_url.empty()) throw std::runtime_error("config: backend http requires http_url");
    } else {
        throw std::runtime_error("config: unknown backend '" + config.backend +
                                 "' (expected mock or http)");
    }

    if (config.embedding_provider == "hash") {
        if (config.embedding_dim < 1) throw std::runtime_error("config: embedding_dim must be >= 1");
    } else if (config.embedding_provider == "http") {
        if (config.embedding_url.empty())
            throw std::runtime_error("config: embedding_provider http requires embedding_url");
        if (config.embedding_dim < 1) throw std::runtime_error("config: embedding_dim must be >= 1");
    } else {
        throw std::runtime_error("config: unknown embedding provider '" + config.embedding_provider +
                                 "' (expected hash or http)");
    }

    if (config.workers < 1) throw std::runtime_error("config: workers must be >= 1");
    if (config.max_tokens < 1) throw std::runtime_error("config: max_tokens must be >= 1");
    if (config.budget_tokens < 1) throw std::runtime_error("config: budget_tokens must be >= 1");
}

std::unique_ptr<CompletionBackend> make_backend(const ExperimentConfig& config) {
    if (config.backend == "mock")
        return std::make_unique<MockBackend>(MockBackend::from_fixture(config.mock_fixture));
    if (config.backend == "http") return std::make_unique<HttpBackend>(config.http_url);
    throw std::runtime_error("unknown backend '" + config.backend + "'");
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ExperimentConfig& config) {
    std::size_t dim = static_cast<std::size_t>(config.embedding_dim);
    if (config.embedding_provider == "hash") return std::make_unique<HashingEmbedder>(dim);
    if (config.embedding_provider == "http")
        return std::make_unique<HttpEmbeddingProvider>(config.embedding_url,
                                                       "http:" + config.embedding_url, dim);
    throw std::runtime_error("unknown embedding provider '" + config.embedding_provider + "'");
}

std::string re_question(const ReInstance& instance) {
    return "what is the relation between " + instance.subj.surface + " and " + instance.obj.surface;
}

namespace {

// One free-form (mrc / re) test or demonstration item in harness form.
struct FreeItem {
    std::string id;
    std::string context;
    std::string question;
    std::string completion;  // demo gold answer; unused for test items
    std::string embed_text;
    std::vector<std::string> original_answers;
    std::vector<std::string> substituted_answers;
};

std::string embed_text_of(const std::string& question, const std::string& context) {
    return question + " " + context;
}

std::vector<FreeItem> load_free_test_items(const ExperimentConfig& config,
                                           std::set<std::string>& re_labels) {
    std::vector<FreeItem> items;
    if (config.schema == Schema::mrc) {
        for (const auto& r : load_counterfactuals<MrcInstance>(config.counterfactual_path)) {
            FreeItem it;
            it.id = r.derived.id;
            it.context = r.derived.context;
            it.question = r.derived.question;
            it.original_answers = r.original_answers;
            it.substituted_answers = r.substituted_answers;
            it.embed_text = embed_text_of(it.question, it.context);
            items.push_back(std::move(it));
        }
    } else {
        for (const auto& r : load_counterfactuals<ReInstance>(config.counterfactual_path)) {
            FreeItem it;
            it.id = r.derived.id;
            it.context = r.derived.context;
            it.question = re_question(r.derived);
            it.original_answers = r.original_answers;
            it.substituted_answers = r.substituted_answers;
            it.embed_text = embed_text_of(it.question, it.context);
            for (const auto& a : it.original_answers) re_labels.insert(a);
            for (const auto& a : it.substituted_answers) re_labels.insert(a);
            items.push_back(std::move(it));
        }
    }
    return items;
}

std::vector<FreeItem> load_free_demo_pool(const ExperimentConfig& config,
                                          std::set<std::string>& re_labels) {
    std::vector<FreeItem> pool;
    if (config.demo_condition == DemoCondition::zero_shot) return pool;

    if (config.schema == Schema::mrc) {
        auto records = load_counterfactuals<MrcInstance>(config.demo_pool_path);
        if (config.demo_condition == DemoCondition::counterfactual_demos) {
            for (const auto& r : records) {
                if (r.substituted_answers.empty())
                    throw std::runtime_error("demo pool record '" + r.derived.id +
                                             "': no substituted answers");
                FreeItem it;
                it.id = r.derived.id;
                it.context = r.derived.context;
                it.question = r.derived.question;
                it.completion = r.substituted_answers[0];
                it.embed_text = embed_text_of(it.question, it.context);
                pool.push_back(std::move(it));
            }
        } else {
            auto originals = load_dataset<MrcInstance>(config.original_path);
            std::unordered_map<std::string, const MrcInstance*> by_id;
            for (const auto& inst : originals.items) by_id[inst.id] = &inst;
            for (const auto& r : records) {
                auto at = by_id.find(r.provenance.source_id);
                if (at == by_id.end())
                    throw std::runtime_error("demo pool record '" + r.derived.id + "': source id '" +
                                             r.provenance.source_id +
                                             "' not present in original dataset");
                const MrcInstance& src = *at->second;
                FreeItem it;
                it.id = src.id;
                it.context = src.context;
                it.question = src.question;
                it.completion = src.answers[0];
                it.embed_text = embed_text_of(it.question, it.context);
                pool.push_back(std::move(it));
            }
        }
    } else {
        auto records = load_counterfactuals<ReInstance>(config.demo_pool_path);
        if (config.demo_condition == DemoCondition::counterfactual_demos) {
            for (const auto& r : records) {
                FreeItem it;
                it.id = r.derived.id;
                it.context = r.derived.context;
                it.question = re_question(r.derived);
                it.completion = r.derived.relation;
                it.embed_text = embed_text_of(it.question, it.context);
                for (const auto& a : r.original_answers) re_labels.insert(a);
                for (const auto& a : r.substituted_answers) re_labels.insert(a);
                pool.push_back(std::move(it));
            }
        } else {
            auto originals = load_dataset<ReInstance>(config.original_path);
            std::unordered_map<std::string, const ReInstance*> by_id;
            for (const auto& inst : originals.items) by_id[inst.id] = &inst;
            for (const auto& r : records) {
                auto at = by_id.find(r.provenance.source_id);
                if (at == by_id.end())
                    throw std::runtime_error("demo pool record '" + r.derived.id + "': source id '" +
                                             r.provenance.source_id +
                                             "' not present in original dataset");
                const ReInstance& src = *at->second;
                FreeItem it;
                it.id = src.id;
                it.context = src.context;
                it.question = re_question(src);
                it.completion = src.relation;
                it.embed_text = embed_text_of(it.question, it.context);
                re_labels.insert(src.relation);
                pool.push_back(std::move(it));
            }
        }
    }
    return pool;
}

PromptConfig prompt_config_for(const ExperimentConfig& config, TemplateKind kind, bool with_options) {
    PromptConfig pc;
    pc.narrator = config.narrator;
    pc.include_options = with_options;
    if (kind == TemplateKind::Instr || kind == TemplateKind::OpinInstr)
        pc.instruction = config.instruction.empty() ? default_instruction(config.dataset_id)
                                                    : config.instruction;
    return pc;
}

// Map a free-form completion onto the relation label set: normalized
// equality first, then a unique token-boundary containment; anything else
// falls back to the negative label.
std::string map_relation_label(const std::string& answer, const std::vector<std::string>& labels,
                               const std::string& negative_label) {
    std::string norm = normalize_text(answer);
    for (const auto& label : labels)
        if (normalize_text(label) == norm) return label;
    std::string contained;
    for (const auto& label : labels) {
        if (!contains_match(answer, {label})) continue;
        if (!contained.empty()) return negative_label;  // ambiguous
        contained = label;
    }
    return contained.empty() ? negative_label : contained;
}

double elapsed_ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

TemplateResult run_freeform_template(const ExperimentConfig& config, TemplateKind kind,
                                     const std::vector<FreeItem>& items,
                                     const std::vector<FreeItem>& pool,
                                     const std::optional<std::vector<std::string>>& options,
                                     Gateway& gateway, EmbeddingProvider* provider,
                                     EmbeddingCache* embed_cache) {
    PromptConfig pc = prompt_config_for(config, kind, options.has_value());

    std::vector<Demo> demo_protos;
    std::vector<std::pair<std::string, std::string>> retrieval_pool;
    std::unordered_map<std::string, std::size_t> pool_index;
    demo_protos.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        demo_protos.push_back(Demo{pool[i].id,
                                   render(kind, pool[i].context, pool[i].question, options, pc),
                                   pool[i].completion});
        retrieval_pool.emplace_back(pool[i].id, pool[i].embed_text);
        pool_index[pool[i].id] = i;
    }

    TemplateResult result;
    result.kind = kind;
    result.records.resize(items.size());

    parallel_for(items.size(), config.workers, [&](std::size_t i) {
        auto t0 = std::chrono::steady_clock::now();
        RunRecord& rec = result.records[i];
        rec.instance_id = items[i].id;
        try {
            std::string test_prompt = render(kind, items[i].context, items[i].question, options, pc);
            PromptBundle bundle;
            if (pool.empty()) {
                bundle.text = std::move(test_prompt);
                bundle.kind = kind;
            } else {
                std::vector<std::pair<std::string, std::string>> candidates;
                candidates.reserve(retrieval_pool.size());
                for (const auto& entry : retrieval_pool)
                    if (entry.first != items[i].id) candidates.push_back(entry);
                auto ranked = select_demos(items[i].embed_text, candidates,
                                           static_cast<std::size_t>(config.demo_k), *provider,
                                           embed_cache);
                std::vector<Demo> demos;
                demos.reserve(ranked.size());
                for (const auto& rd : ranked) demos.push_back(demo_protos[pool_index.at(rd.id)]);
                bundle = assemble_few_shot(kind, demos, test_prompt, config.budget_tokens);
            }
            rec.prompt = bundle.text;
            rec.prompt_sha256 = sha256_hex(bundle.text);
            rec.demo_ids = bundle.demo_ids;

            CompletionRequest req;
            req.prompt = bundle.text;
            req.max_tokens = config.max_tokens;
            req.model_id = config.model_id;
            Completion comp = gateway.complete(req);
            rec.completion = comp.text;

            std::string answer = extract_answer(comp.text);
            rec.matched_original = contains_match(answer, items[i].original_answers);
            rec.matched_substituted = contains_match(answer, items[i].substituted_answers);
            rec.em = exact_match(answer, items[i].substituted_answers);
            if (options)
                rec.predicted_label = map_relation_label(answer, *options, config.negative_label);
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        rec.elapsed_ms = elapsed_ms_since(t0);
    });

    std::size_t evaluated = 0, n_o = 0, n_s = 0, n_em = 0;
    std::vector<std::string> preds, golds;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const RunRecord& rec = result.records[i];
        if (!rec.error.empty()) continue;
        ++evaluated;
        if (rec.matched_original) ++n_o;
        if (rec.matched_substituted) ++n_s;
        if (rec.em) ++n_em;
        if (config.schema == Schema::re) {
            preds.push_back(rec.predicted_label);
            golds.push_back(items[i].substituted_answers.empty() ? std::string()
                                                                 : items[i].substituted_answers[0]);
        }
    }
    result.report.n.total = items.size();
    result.report.n.evaluated = evaluated;
    if (evaluated > 0) {
        double denom = static_cast<double>(evaluated);
        result.report.p_o = n_o / denom;
        result.report.p_s = n_s / denom;
        result.report.m_r = memorization_ratio(*result.report.p_o, *result.report.p_s);
        result.report.em = n_em / denom;
        if (config.schema == Schema::re)
            result.report.f1 = re_f1(preds, golds, config.negative_label);
    }
    return result;
}

std::string choice_context(const std::vector<std::string>& documents) {
    return documents.empty() ? std::string("N/A") : join(documents, "\n");
}

TemplateResult run_choice_template(const ExperimentConfig& config, TemplateKind kind,
                                   const std::vector<ChoiceInstance>& items,
                                   const std::vector<ChoiceInstance>& pool, Gateway& gateway) {
    PromptConfig pc = prompt_config_for(config, kind, true);

    std::vector<Demo> demo_protos;
    demo_protos.reserve(pool.size());
    for (const auto& demo : pool)
        demo_protos.push_back(Demo{demo.id,
                                   render(kind, choice_context(demo.documents), demo.question,
                                          demo.choices, pc),
                                   demo.choices[static_cast<std::size_t>(demo.gold_index)]});

    TemplateResult result;
    result.kind = kind;
    result.records.resize(items.size());

    parallel_for(items.size(), config.workers, [&](std::size_t i) {
        auto t0 = std::chrono::steady_clock::now();
        const ChoiceInstance& inst = items[i];
        RunRecord& rec = result.records[i];
        rec.instance_id = inst.id;
        rec.gold_index = inst.gold_index;
        rec.answerable = inst.answerable;
        try {
            std::string test_prompt =
                render(kind, choice_context(inst.documents), inst.question, inst.choices, pc);
            PromptBundle bundle;
            if (demo_protos.empty()) {
                bundle.text = std::move(test_prompt);
                bundle.kind = kind;
            } else {
                std::vector<Demo> demos;
                for (const auto& demo : demo_protos) {
                    if (demo.id == inst.id) continue;
                    demos.push_back(demo);
                    if (demos.size() == static_cast<std::size_t>(config.demo_k)) break;
                }
                bundle = assemble_few_shot(kind, demos, test_prompt, config.budget_tokens);
            }
            rec.prompt = bundle.text;
            rec.prompt_sha256 = sha256_hex(bundle.text);
            rec.demo_ids = bundle.demo_ids;

            std::vector<std::string> continuations;
            continuations.reserve(inst.choices.size());
            for (const auto& choice : inst.choices) continuations.push_back(" " + choice);
            ChoiceDistribution dist = score_choices(gateway, config.model_id, bundle.text,
                                                    continuations, config.score_mode);
            rec.choice_probs = dist.probs;
            rec.predicted_index = static_cast<int>(
                std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin());
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        rec.elapsed_ms = elapsed_ms_since(t0);
    });

    std::vector<ChoiceOutcome> outcomes;
    std::vector<double> estimates;
    std::vector<int> answerability;
    std::size_t evaluated = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const RunRecord& rec = result.records[i];
        if (!rec.error.empty()) continue;
        ++evaluated;
        outcomes.push_back(ChoiceOutcome{rec.predicted_index, rec.gold_index, rec.answerable});
        auto idk = std::find(items[i].choices.begin(), items[i].choices.end(), config.idk_text);
        if (idk != items[i].choices.end()) {
            estimates.push_back(
                rec.choice_probs[static_cast<std::size_t>(idk - items[i].choices.begin())]);
            answerability.push_back(items[i].answerable ? 0 : 1);
        }
    }
    result.report.n.total = items.size();
    result.report.n.evaluated = evaluated;
    if (!outcomes.empty()) {
        SubsetAccuracy acc = subset_accuracy(outcomes);
        result.report.acc_all = acc.all;
        result.report.acc_hasans = acc.hasans;
        result.report.acc_noans = acc.noans;
        result.report.n.hasans = acc.n_hasans;
        result.report.n.noans = acc.n_noans;
    }
    if (!estimates.empty()) result.report.brier = brier_score(estimates, answerability);
    return result;
}

}  // namespace

RunOutput run_experiment(const ExperimentConfig& raw_config) {
    ExperimentConfig config = raw_config;
    validate_config(config);

    auto backend = make_backend(config);
    std::optional<ResponseCache> cache;
    if (!config.cache_path.empty()) cache.emplace(config.cache_path);
    Gateway gateway(*backend, cache ? &*cache : nullptr);

    RunOutput out;
    if (config.schema == Schema::choice) {
        auto items = load_dataset<ChoiceInstance>(config.counterfactual_path).items;
        std::vector<ChoiceInstance> pool;
        if (config.demo_condition != DemoCondition::zero_shot) {
            pool = load_dataset<ChoiceInstance>(config.demo_pool_path).items;
            DetRng rng(splitmix64(config.seed ^ fnv1a64("choice_demo_shuffle")));
            for (std::size_t i = pool.size(); i > 1; --i)
                std::swap(pool[i - 1], pool[rng.bounded(i)]);
        }
        for (TemplateKind kind : config.templates)
            out.per_template.push_back(run_choice_template(config, kind, items, pool, gateway));
    } else {
        std::set<std::string> re_labels;
        auto items = load_free_test_items(config, re_labels);
        auto pool = load_free_demo_pool(config, re_labels);
        std::optional<std::vector<std::string>> options;
        if (config.schema == Schema::re) {
            re_labels.insert(config.negative_label);
            options.emplace(re_labels.begin(), re_labels.end());
        }
        std::unique_ptr<EmbeddingProvider> provider;
        EmbeddingCache embed_cache;
        if (!pool.empty()) provider = make_embedding_provider(config);
        for (TemplateKind kind : config.templates)
            out.per_template.push_back(run_freeform_template(config, kind, items, pool, options,
                                                             gateway, provider.get(), &embed_cache));
    }

    std::size_t total = 0, evaluated = 0;
    for (const auto& tr : out.per_template) {
        total += tr.report.n.total;
        evaluated += tr.report.n.evaluated;
    }
    out.coverage = total == 0 ? 1.0 : static_cast<double>(evaluated) / static_cast<double>(total);
    out.stats = gateway.stats();
    return out;
}

namespace {

struct Probe {
    std::string id;
    std::string question;
    std::vector<std::string> answers;
};

FilterOutcome filter_probes(const std::vector<Probe>& probes, Gateway& gateway,
                            const std::string& model_id, const std::string& probe_template,
                            int max_tokens, int workers) {
    std::size_t at = probe_template.find("{q}");
    if (at == std::string::npos)
        throw std::runtime_error("probe template must contain {q}: '" + probe_template + "'");

    std::vector<int> kept(probes.size(), 0);
    std::vector<std::string> errors(probes.size());
    parallel_for(probes.size(), workers, [&](std::size_t i) {
        try {
            std::string prompt = probe_template;
            prompt.replace(at, 3, probes[i].question);
            CompletionRequest req;
            req.prompt = prompt;
            req.max_tokens = max_tokens;
            req.model_id = model_id;
            Completion comp = gateway.complete(req);
            kept[i] = contains_match(extract_answer(comp.text), probes[i].answers) ? 1 : 0;
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    FilterOutcome outcome;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        if (!errors[i].empty()) {
            outcome.errors.emplace_back(probes[i].id, errors[i]);
            outcome.dropped_ids.push_back(probes[i].id);
        } else if (kept[i]) {
            outcome.kept_ids.push_back(probes[i].id);
        } else {
            outcome.dropped_ids.push_back(probes[i].id);
        }
    }
    return outcome;
}

}  // namespace

FilterOutcome closed_book_filter(const MrcDataset& dataset, Gateway& gateway,
                                 const std::string& model_id, const std::string& probe_template,
                                 int max_tokens, int workers) {
    std::vector<Probe> probes;
    probes.reserve(dataset.size());
    for (const auto& inst : dataset.items) probes.push_back({inst.id, inst.question, inst.answers});
    return filter_probes(probes, gateway, model_id, probe_template, max_tokens, workers);
}

FilterOutcome closed_book_filter(const ReDataset& dataset, Gateway& gateway,
                                 const std::string& model_id, const std::string& probe_template,
                                 int max_tokens, int workers) {
    std::vector<Probe> probes;
    probes.reserve(dataset.size());
    for (const auto& inst : dataset.items)
        probes.push_back({inst.id, re_question(inst), {inst.relation}});
    return filter_probes(probes, gateway, model_id, probe_template, max_tokens, workers);
}

namespace {

template <typename T>
Dataset<T> apply_filter_impl(const Dataset<T>& dataset, const FilterOutcome& outcome) {
    std::unordered_set<std::string> keep(outcome.kept_ids.begin(), outcome.kept_ids.end());
    Dataset<T> subset;
    for (const auto& inst : dataset.items)
        if (keep.count(inst.id)) subset.items.push_back(inst);
    return subset;
}

}  // namespace

MrcDataset apply_filter(const MrcDataset& dataset, const FilterOutcome& outcome) {
    return apply_filter_impl(dataset, outcome);
}

ReDataset apply_filter(const ReDataset& dataset, const FilterOutcome& outcome) {
    return apply_filter_impl(dataset, outcome);
}

void save_filter_manifest(const FilterOutcome& outcome, const std::string& path) {
    json errs = json::array();
    for (const auto& [id, message] : outcome.errors)
        errs.push_back(json{{"id", id}, {"message", message}});
    json j{{"kept", outcome.kept_ids}, {"dropped", outcome.dropped_ids}, {"errors", errs}};
    write_file(path, j.dump(2) + "\n");
}

namespace {

std::string fmt_pct(const std::optional<double>& rate) {
    if (!rate) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *rate * 100.0);
    return buf;
}

std::string fmt_brier(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

std::string or_dash(const std::string& s) { return s.empty() ? "—" : s; }

const char* kReportColumns =
    "template,condition,n_total,n_evaluated,p_s,p_o,m_r,em,f1,acc_all,acc_hasans,acc_noans,brier";

std::vector<std::string> report_row(const TemplateResult& tr, const ExperimentConfig& config) {
    const MetricsReport& r = tr.report;
    return {to_string(tr.kind),
            to_string(config.demo_condition),
            std::to_string(r.n.total),
            std::to_string(r.n.evaluated),
            fmt_pct(r.p_s),
            fmt_pct(r.p_o),
            fmt_pct(r.m_r),
            fmt_pct(r.em),
            fmt_pct(r.f1),
            fmt_pct(r.acc_all),
            fmt_pct(r.acc_hasans),
            fmt_pct(r.acc_noans),
            fmt_brier(r.brier)};
}

}  // namespace

std::string render_report_csv(const RunOutput& out, const ExperimentConfig& config) {
    std::string csv = kReportColumns;
    csv += '\n';
    for (const auto& tr : out.per_template) {
        csv += join(report_row(tr, config), ",");
        csv += '\n';
    }
    return csv;
}

std::string render_report_markdown(const RunOutput& out, const ExperimentConfig& config) {
    char coverage[32];
    std::snprintf(coverage, sizeof coverage, "%.2f", out.coverage * 100.0);
    std::string md = "# Run report\n\n";
    md += "Model: " + config.model_id + ", schema: " + to_string(config.schema) +
          ", condition: " + to_string(config.demo_condition) +
          ", k: " + std::to_string(config.demo_k) + ", seed: " + std::to_string(config.seed) +
          ", coverage: " + coverage + "%\n\n";
    md += "| template | condition | n_total | n_evaluated | p_s | p_o | m_r | em | f1 | acc_all | "
          "acc_hasans | acc_noans | brier |\n";
    md += "|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& tr : out.per_template) {
        std::vector<std::string> cells = report_row(tr, config);
        for (auto& cell : cells) cell = or_dash(cell);
        md += "| " + join(cells, " | ") + " |\n";
    }
    return md;
}

nlohmann::json report_json(const RunOutput& out, const ExperimentConfig& config) {
    json templates = json::array();
    for (const auto& tr : out.per_template) {
        json metrics = json::object();
        auto put = [&metrics](const char* key, const std::optional<double>& v) {
            if (v) metrics[key] = *v;
        };
        put("p_s", tr.report.p_s);
        put("p_o", tr.report.p_o);
        put("m_r", tr.report.m_r);
        put("em", tr.report.em);
        put("f1", tr.report.f1);
        put("acc_all", tr.report.acc_all);
        put("acc_hasans", tr.report.acc_hasans);
        put("acc_noans", tr.report.acc_noans);
        put("brier", tr.report.brier);
        templates.push_back(json{{"template", to_string(tr.kind)},
                                 {"metrics", metrics},
                                 {"n",
                                  json{{"total", tr.report.n.total},
                                       {"evaluated", tr.report.n.evaluated},
                                       {"hasans", tr.report.n.hasans},
                                       {"noans", tr.report.n.noans}}}});
    }
    return json{{"model_id", config.model_id},
                {"schema", to_string(config.schema)},
                {"demo_condition", to_string(config.demo_condition)},
                {"demo_k", config.demo_k},
                {"score_mode", to_string(config.score_mode)},
                {"seed", config.seed},
                {"coverage", out.coverage},
                {"templates", templates}};
}

namespace {

json record_json(const RunRecord& rec, TemplateKind kind, Schema schema) {
    json j{{"id", rec.instance_id},
           {"template", to_string(kind)},
           {"prompt_sha256", rec.prompt_sha256},
           {"demo_ids", rec.demo_ids}};
    if (!rec.error.empty()) {
        j["error"] = rec.error;
        return j;
    }
    if (schema == Schema::choice) {
        j["choice_probs"] = rec.choice_probs;
        j["predicted_index"] = rec.predicted_index;
        j["gold_index"] = rec.gold_index;
        j["answerable"] = rec.answerable;
    } else {
        j["completion"] = rec.completion;
        j["matched_original"] = rec.matched_original;
        j["matched_substituted"] = rec.matched_substituted;
        j["em"] = rec.em;
        if (schema == Schema::re) j["predicted_label"] = rec.predicted_label;
    }
    return j;
}

}  // namespace

void emit_report(const RunOutput& out, const ExperimentConfig& config) {
    if (config.output_dir.empty()) throw std::runtime_error("emit_report: output_dir is empty");
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec)
        throw std::runtime_error("cannot create output directory " + config.output_dir + ": " +
                                 ec.message());
    const std::string dir = config.output_dir + "/";

    write_file(dir + "report.csv", render_report_csv(out, config));
    write_file(dir + "report.md", render_report_markdown(out, config));
    write_file(dir + "report.json", report_json(out, config).dump(2) + "\n");

    std::string records;
    for (const auto& tr : out.per_template)
        for (const auto& rec : tr.records)
            records += record_json(rec, tr.kind, config.schema).dump() + "\n";
    write_file(dir + "records.jsonl", records);

    if (config.dump_prompts) {
        std::string prompts;
        for (const auto& tr : out.per_template)
            for (const auto& rec : tr.records)
                prompts += json{{"id", rec.instance_id},
                                {"template", to_string(tr.kind)},
                                {"prompt", rec.prompt}}
                               .dump() +
                           "\n";
        write_file(dir + "prompts.jsonl", prompts);
    }
}

namespace {

const char* kSweepPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

std::string sweep_svg(const std::vector<json>& runs) {
    // One polyline of the memorization ratio per template across runs.
    const int width = 720, height = 420, left = 60, right = 170, top = 30, bottom = 60;
    const int plot_w = width - left - right, plot_h = height - top - bottom;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
        << "Memorization ratio by model</text>\n";

    auto x_of = [&](std::size_t i) {
        if (runs.size() <= 1) return left + plot_w / 2;
        return left + static_cast<int>(static_cast<double>(i) * plot_w /
                                       static_cast<double>(runs.size() - 1));
    };
    auto y_of = [&](double pct) { return top + static_cast<int>((100.0 - pct) / 100.0 * plot_h); };

    for (int tick = 0; tick <= 100; tick += 25) {
        int y = y_of(tick);
        svg << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\""
            << y << "\" stroke=\"#dddddd\"/>\n";
        svg << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << tick
            << "</text>\n";
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        svg << "<text x=\"" << x_of(i) << "\" y=\"" << top + plot_h + 20
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
            << runs[i].at("model_id").get<std::string>() << "</text>\n";
    }

    std::vector<std::string> kinds;
    for (const auto& run : runs)
        for (const auto& tj : run.at("templates")) {
            std::string name = tj.at("template").get<std::string>();
            if (std::find(kinds.begin(), kinds.end(), name) == kinds.end()) kinds.push_back(name);
        }

    for (std::size_t t = 0; t < kinds.size(); ++t) {
        const char* color = kSweepPalette[t % 5];
        std::ostringstream points;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            for (const auto& tj : runs[i].at("templates")) {
                if (tj.at("template").get<std::string>() != kinds[t]) continue;
                const json& metrics = tj.at("metrics");
                if (!metrics.contains("m_r")) continue;
                double pct = metrics["m_r"].get<double>() * 100.0;
                points << x_of(i) << "," << y_of(pct) << " ";
                svg << "<circle cx=\"" << x_of(i) << "\" cy=\"" << y_of(pct)
                    << "\" r=\"3\" fill=\"" << color << "\"/>\n";
            }
        }
        std::string pts = points.str();
        if (!pts.empty())
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
                << pts << "\"/>\n";
        int ly = top + 14 + static_cast<int>(t) * 18;
        svg << "<rect x=\"" << left + plot_w + 16 << "\" y=\"" << ly - 9
            << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
        svg << "<text x=\"" << left + plot_w + 34 << "\" y=\"" << ly + 2
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << kinds[t] << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace

void write_sweep_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) throw std::runtime_error("sweep report needs at least one run directory");
    std::vector<json> runs;
    for (const auto& dir : run_dirs) {
        std::string path = dir + "/report.json";
        try {
            runs.push_back(json::parse(read_file(path)));
        } catch (const std::exception& e) {
            throw std::runtime_error("cannot read run report " + path + ": " + e.what());
        }
    }

    std::string csv =
        "model_id,schema,demo_condition,template,p_s,p_o,m_r,em,f1,acc_all,acc_hasans,acc_noans,"
        "brier\n";
    for (const auto& run : runs) {
        for (const auto& tj : run.at("templates")) {
            const json& metrics = tj.at("metrics");
            auto cell = [&metrics](const char* key) {
                return metrics.contains(key)
                           ? fmt_pct(std::optional<double>(metrics[key].get<double>()))
                           : std::string();
            };
            std::vector<std::string> row{
                run.at("model_id").get<std::string>(),
                run.at("schema").get<std::string>(),
                run.at("demo_condition").get<std::string>(),
                tj.at("template").get<std::string>(),
                cell("p_s"),
                cell("p_o"),
                cell("m_r"),
                cell("em"),
                cell("f1"),
                cell("acc_all"),
                cell("acc_hasans"),
                cell("acc_noans"),
                metrics.contains("brier")
                    ? fmt_brier(std::optional<double>(metrics["brier"].get<double>()))
                    : std::string()};
            csv += join(row, ",") + "\n";
        }
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir + ": " + ec.message());
    write_file(out_dir + "/sweep.csv", csv);
    write_file(out_dir + "/sweep.svg", sweep_svg(runs));
}

}  // namespace ctxfaith

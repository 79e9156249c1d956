#include "ctxfaith/prompting.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

#include "ctxfaith/util.hpp"

namespace ctxfaith {

TemplateKind template_kind_from_string(const std::string& s) {
    if (s == "base") return TemplateKind::Base;
    if (s == "attr") return TemplateKind::Attr;
    if (s == "instr") return TemplateKind::Instr;
    if (s == "opin") return TemplateKind::Opin;
    if (s == "opin_instr") return TemplateKind::OpinInstr;
    throw std::runtime_error("unknown template '" + s +
                             "' (expected base, attr, instr, opin or opin_instr)");
}

std::string to_string(TemplateKind k) {
    switch (k) {
        case TemplateKind::Base: return "base";
        case TemplateKind::Attr: return "attr";
        case TemplateKind::Instr: return "instr";
        case TemplateKind::Opin: return "opin";
        case TemplateKind::OpinInstr: return "opin_instr";
    }
    throw std::logic_error("unreachable");
}

int default_token_counter(std::string_view text) {
    std::size_t count = 0;
    bool in_token = false;
    for (char ch : text) {
        bool space = std::isspace(static_cast<unsigned char>(ch)) != 0;
        if (!space && !in_token) ++count;
        in_token = !space;
    }
    return static_cast<int>(std::ceil(static_cast<double>(count) * 1.3));
}

std::string render(TemplateKind kind, const std::string& context, const std::string& question,
                   const std::optional<std::vector<std::string>>& options, const PromptConfig& config) {
    if (context.empty()) throw std::runtime_error("render: empty context");
    if (question.empty()) throw std::runtime_error("render: empty question");
    if (config.narrator.empty()) throw std::runtime_error("render: empty narrator");
    if (options.has_value() != config.include_options)
        throw std::runtime_error("render: options must be present iff include_options is set");

    bool instructed = kind == TemplateKind::Instr || kind == TemplateKind::OpinInstr;
    bool opinionated = kind == TemplateKind::Opin || kind == TemplateKind::OpinInstr;
    if (instructed && config.instruction.empty())
        throw std::runtime_error("render: instruction required for instr / opin_instr templates");

    std::string out;
    if (instructed) out += "Instruction: " + config.instruction + " ";

    if (opinionated)
        out += config.narrator + " said, \"" + context + "\"";
    else
        out += context;

    out += " Q: " + question;
    if (kind == TemplateKind::Attr) out += " based on the given text";
    if (opinionated) out += " in " + config.narrator + "'s opinion";
    out += "?";

    if (config.include_options) out += " " + config.options_label + " " + join(*options, "; ");

    out += " A:";
    return out;
}

std::string default_instruction(const std::string& dataset_id) {
    if (dataset_id == "nq")
        return "read the given information and answer the corresponding question.";
    if (dataset_id == "retacred")
        return "identify the relationship between two entities from a list of options.";
    if (dataset_id == "realtimeqa")
        return "answer a question based on the provided input-output pairs.";
    throw std::runtime_error("no default instruction for dataset '" + dataset_id +
                             "' (known: nq, retacred, realtimeqa)");
}

PromptBundle assemble_few_shot(TemplateKind kind, const std::vector<Demo>& demos,
                               const std::string& test_prompt, int budget_tokens,
                               const TokenCounter& counter) {
    if (counter(test_prompt) > budget_tokens)
        throw std::runtime_error("test prompt alone exceeds the token budget (" +
                                 std::to_string(counter(test_prompt)) + " > " +
                                 std::to_string(budget_tokens) + ")");

    std::size_t take = std::min<std::size_t>(demos.size(), kMaxDemos);
    PromptBundle bundle;
    bundle.kind = kind;
    for (;;) {
        std::vector<std::string> blocks;
        blocks.reserve(take + 1);
        for (std::size_t i = 0; i < take; ++i)
            blocks.push_back(demos[i].prompt + " " + demos[i].completion);
        blocks.push_back(test_prompt);
        std::string text = join(blocks, "\n\n");
        int estimate = counter(text);
        if (estimate <= budget_tokens || take == 0) {
            bundle.text = std::move(text);
            bundle.token_estimate = estimate;
            break;
        }
        --take;
    }
    for (std::size_t i = 0; i < take; ++i) bundle.demo_ids.push_back(demos[i].id);
    return bundle;
}

}  // namespace ctxfaith

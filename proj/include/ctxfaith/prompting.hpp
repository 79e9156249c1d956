#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxfaith {

enum class TemplateKind { Base, Attr, Instr, Opin, OpinInstr };

TemplateKind template_kind_from_string(const std::string& s);
std::string to_string(TemplateKind k);

struct PromptConfig {
    std::string narrator = "Bob";
    std::string instruction;  // required for Instr / OpinInstr
    std::string options_label = "Options:";
    bool include_options = false;
};

// Estimated token count of a prompt. The default counter is a whitespace
// token count with a 1.3 safety factor; backends with exact tokenizers can
// substitute their own.
using TokenCounter = std::function<int(std::string_view)>;
int default_token_counter(std::string_view text);

struct Demo {
    std::string id;
    std::string prompt;      // rendered with the same TemplateKind as the test prompt
    std::string completion;  // the demo's gold answer text
};

struct PromptBundle {
    std::string text;
    TemplateKind kind = TemplateKind::Base;
    std::vector<std::string> demo_ids;
    int token_estimate = 0;
};

// Render one prompt. Options must be supplied exactly when
// config.include_options is set; they are joined with "; " after the label.
std::string render(TemplateKind kind, const std::string& context, const std::string& question,
                   const std::optional<std::vector<std::string>>& options, const PromptConfig& config);

// The published top-1 APE instruction for each evaluation dataset.
std::string default_instruction(const std::string& dataset_id);

inline constexpr int kMaxDemos = 16;

// Prepend demo blocks (prompt + gold completion, blank-line separated) to
// the test prompt. Demos arrive best-first; the lowest-ranked are dropped
// until the estimate fits the budget. Never uses more than kMaxDemos.
PromptBundle assemble_few_shot(TemplateKind kind, const std::vector<Demo>& demos,
                               const std::string& test_prompt, int budget_tokens,
                               const TokenCounter& counter = default_token_counter);

}  // namespace ctxfaith

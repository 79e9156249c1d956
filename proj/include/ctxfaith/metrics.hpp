#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxfaith {

// SQuAD-style answer normalization: ASCII lowercase, strip ASCII
// punctuation, drop stop-word tokens (articles by default), collapse
// whitespace. Idempotent.
std::string normalize_text(std::string_view s,
                           const std::vector<std::string>& stop_words = {"a", "an", "the"});

// True iff some answer, after normalization, appears in the normalized
// prediction as a contiguous run of whole tokens. An answer that normalizes
// to nothing matches only a prediction that also normalizes to nothing.
bool contains_match(std::string_view prediction, const std::vector<std::string>& answers,
                    const std::vector<std::string>& stop_words = {"a", "an", "the"});

// True iff the normalized prediction equals some normalized answer.
bool exact_match(std::string_view prediction, const std::vector<std::string>& answers,
                 const std::vector<std::string>& stop_words = {"a", "an", "the"});

// p_o / (p_o + p_s); empty when both rates are zero.
std::optional<double> memorization_ratio(double p_o, double p_s);

// Mean squared difference between estimates and binary outcomes.
double brier_score(const std::vector<double>& estimates, const std::vector<int>& outcomes);

// Micro-F1 over non-negative labels. Undefined precision/recall count as 0.
double re_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& golds,
             const std::string& negative_label);

struct ChoiceOutcome {
    int predicted_index = -1;
    int gold_index = -1;
    bool answerable = false;
};

struct SubsetAccuracy {
    std::optional<double> all, hasans, noans;
    std::size_t n_total = 0, n_hasans = 0, n_noans = 0;
};

SubsetAccuracy subset_accuracy(const std::vector<ChoiceOutcome>& records);

struct ReportCounts {
    std::size_t total = 0;      // instances presented to the run
    std::size_t evaluated = 0;  // instances that produced a usable record
    std::size_t hasans = 0;
    std::size_t noans = 0;
};

// One row of the output tables. Fields are absent when the task does not
// produce them (e.g. no F1 for MRC) or the defining subset is empty.
struct MetricsReport {
    std::optional<double> p_s, p_o, m_r, em, f1;
    std::optional<double> acc_all, acc_hasans, acc_noans, brier;
    ReportCounts n;
};

}  // namespace ctxfaith

#include "ctxfaith/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_set>

namespace ctxfaith {

namespace {

std::vector<std::string> tokenize_normalized(std::string_view s, const std::vector<std::string>& stop_words) {
    std::unordered_set<std::string_view> stops(stop_words.begin(), stop_words.end());
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty() && !stops.count(cur)) tokens.push_back(cur);
        cur.clear();
    };
    for (char ch : s) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (c < 0x80) {
            if (std::isspace(c)) {
                flush();
                continue;
            }
            if (std::ispunct(c)) continue;  // removed, not replaced (SQuAD convention)
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            cur.push_back(ch);  // non-ASCII passes through untouched
        }
    }
    flush();
    return tokens;
}

}  // namespace

std::string normalize_text(std::string_view s, const std::vector<std::string>& stop_words) {
    auto tokens = tokenize_normalized(s, stop_words);
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out.append(tokens[i]);
    }
    return out;
}

bool contains_match(std::string_view prediction, const std::vector<std::string>& answers,
                    const std::vector<std::string>& stop_words) {
    if (answers.empty()) throw std::invalid_argument("contains_match: answers must be non-empty");
    auto pred = tokenize_normalized(prediction, stop_words);
    for (const auto& a : answers) {
        auto ans = tokenize_normalized(a, stop_words);
        if (ans.empty()) {
            if (pred.empty()) return true;
            continue;
        }
        if (ans.size() > pred.size()) continue;
        for (std::size_t i = 0; i + ans.size() <= pred.size(); ++i) {
            if (std::equal(ans.begin(), ans.end(), pred.begin() + static_cast<std::ptrdiff_t>(i)))
                return true;
        }
    }
    return false;
}

bool exact_match(std::string_view prediction, const std::vector<std::string>& answers,
                 const std::vector<std::string>& stop_words) {
    if (answers.empty()) throw std::invalid_argument("exact_match: answers must be non-empty");
    std::string pred = normalize_text(prediction, stop_words);
    for (const auto& a : answers) {
        if (pred == normalize_text(a, stop_words)) return true;
    }
    return false;
}

std::optional<double> memorization_ratio(double p_o, double p_s) {
    if (p_o < 0.0 || p_s < 0.0)
        throw std::invalid_argument("memorization_ratio: rates must be non-negative");
    double denom = p_o + p_s;
    if (denom == 0.0) return std::nullopt;
    return p_o / denom;
}

double brier_score(const std::vector<double>& estimates, const std::vector<int>& outcomes) {
    if (estimates.size() != outcomes.size())
        throw std::invalid_argument("brier_score: length mismatch (" + std::to_string(estimates.size()) +
                                    " estimates, " + std::to_string(outcomes.size()) + " outcomes)");
    if (estimates.empty()) throw std::invalid_argument("brier_score: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (outcomes[i] != 0 && outcomes[i] != 1)
            throw std::invalid_argument("brier_score: outcome must be 0 or 1");
        if (!(estimates[i] >= 0.0 && estimates[i] <= 1.0))
            throw std::invalid_argument("brier_score: estimate must be in [0, 1]");
        double d = estimates[i] - outcomes[i];
        sum += d * d;
    }
    return sum / static_cast<double>(estimates.size());
}

double re_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& golds,
             const std::string& negative_label) {
    if (predictions.size() != golds.size())
        throw std::invalid_argument("re_f1: length mismatch");
    std::size_t pred_pos = 0, gold_pos = 0, correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        bool p_pos = predictions[i] != negative_label;
        bool g_pos = golds[i] != negative_label;
        if (p_pos) ++pred_pos;
        if (g_pos) ++gold_pos;
        if (p_pos && predictions[i] == golds[i]) ++correct;
    }
    if (pred_pos == 0 || gold_pos == 0 || correct == 0) return 0.0;
    double precision = static_cast<double>(correct) / static_cast<double>(pred_pos);
    double recall = static_cast<double>(correct) / static_cast<double>(gold_pos);
    return 2.0 * precision * recall / (precision + recall);
}

SubsetAccuracy subset_accuracy(const std::vector<ChoiceOutcome>& records) {
    if (records.empty()) throw std::invalid_argument("subset_accuracy: empty input");
    SubsetAccuracy out;
    std::size_t hit_all = 0, hit_has = 0, hit_no = 0;
    for (const auto& r : records) {
        bool hit = r.predicted_index == r.gold_index;
        ++out.n_total;
        if (hit) ++hit_all;
        if (r.answerable) {
            ++out.n_hasans;
            if (hit) ++hit_has;
        } else {
            ++out.n_noans;
            if (hit) ++hit_no;
        }
    }
    out.all = static_cast<double>(hit_all) / static_cast<double>(out.n_total);
    if (out.n_hasans) out.hasans = static_cast<double>(hit_has) / static_cast<double>(out.n_hasans);
    if (out.n_noans) out.noans = static_cast<double>(hit_no) / static_cast<double>(out.n_noans);
    return out;
}

}  // namespace ctxfaith

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctxfaith/corpus.hpp"

namespace ctxfaith {

struct Provenance {
    std::string source_id;
    std::optional<std::string> donor_id;
    std::uint64_t seed = 0;
    friend bool operator==(const Provenance&, const Provenance&) = default;
};

// A derived instance plus the link between the answers it displaced and the
// answers it now supports. For MRC the substituted answer is an entity
// surface present in the rewritten context; for RE it is the donor's
// relation label.
template <typename T>
struct CounterfactualRecord {
    T derived;
    std::vector<std::string> original_answers;
    std::vector<std::string> substituted_answers;
    Provenance provenance;
    friend bool operator==(const CounterfactualRecord&, const CounterfactualRecord&) = default;
};

using MrcCounterfactual = CounterfactualRecord<MrcInstance>;
using ReCounterfactual = CounterfactualRecord<ReInstance>;

// Replace the gold answer span in the context with a same-type entity drawn
// uniformly from the inventory, excluding surfaces whose normalized form
// collides with any original answer. Deterministic in (instance.id, seed).
MrcCounterfactual substitute_mrc(const MrcInstance& instance, const EntityInventory& inventory,
                                 std::uint64_t seed);

// Pick a donor context with the same (subj, obj) entity-type pair but a
// different relation, splice the original entity surfaces over the donor
// mentions, and take the donor's relation as the new gold label.
ReCounterfactual swap_re(const ReInstance& instance, const ReDataset& pool, std::uint64_t seed);

// Append an "I don't know" choice; unanswerable instances are relabeled to it.
ChoiceInstance augment_abstention(const ChoiceInstance& instance, const std::string& idk_text);

void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);

template <typename T>
void to_json(nlohmann::json& j, const CounterfactualRecord<T>& r) {
    j = nlohmann::json{{"derived", r.derived},
                       {"original_answers", r.original_answers},
                       {"substituted_answers", r.substituted_answers},
                       {"provenance", r.provenance}};
}

template <typename T>
void from_json(const nlohmann::json& j, CounterfactualRecord<T>& r) {
    r.derived = j.at("derived").get<T>();
    r.original_answers = j.at("original_answers").get<std::vector<std::string>>();
    r.substituted_answers = j.at("substituted_answers").get<std::vector<std::string>>();
    r.provenance = j.at("provenance").get<Provenance>();
}

template <typename T>
std::vector<CounterfactualRecord<T>> load_counterfactuals(const std::string& path);

template <typename T>
void save_counterfactuals(const std::vector<CounterfactualRecord<T>>& records, const std::string& path);

extern template std::vector<MrcCounterfactual> load_counterfactuals<MrcInstance>(const std::string&);
extern template std::vector<ReCounterfactual> load_counterfactuals<ReInstance>(const std::string&);
extern template void save_counterfactuals<MrcInstance>(const std::vector<MrcCounterfactual>&, const std::string&);
extern template void save_counterfactuals<ReInstance>(const std::vector<ReCounterfactual>&, const std::string&);

}  // namespace ctxfaith

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace ctxfaith {

// Spans are (start, end) code-point offsets into the owning context,
// half-open. Serialized form is a two-element array.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const Span&, const Span&) = default;
};

struct EntityMention {
    std::string surface;
    std::string entity_type;
    Span span;
    friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

struct MrcInstance {
    std::string id;
    std::string context;
    std::string question;
    std::vector<std::string> answers;           // answers[0] is the canonical substitution target
    std::optional<Span> answer_span;            // span of answers[0] in context, when known
    std::optional<std::string> answer_entity_type;
    friend bool operator==(const MrcInstance&, const MrcInstance&) = default;
};

struct ReInstance {
    std::string id;
    std::string context;
    EntityMention subj;
    EntityMention obj;
    std::string relation;
    friend bool operator==(const ReInstance&, const ReInstance&) = default;
};

struct ChoiceInstance {
    std::string id;
    std::vector<std::string> documents;  // retrieved contexts, possibly empty
    std::string question;
    std::vector<std::string> choices;
    int gold_index = 0;
    bool answerable = true;
    friend bool operator==(const ChoiceInstance&, const ChoiceInstance&) = default;
};

enum class Schema { mrc, re, choice };

Schema schema_from_string(const std::string& s);
std::string to_string(Schema s);

template <typename T>
struct Dataset {
    std::vector<T> items;

    bool empty() const { return items.empty(); }
    std::size_t size() const { return items.size(); }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

using MrcDataset = Dataset<MrcInstance>;
using ReDataset = Dataset<ReInstance>;
using ChoiceDataset = Dataset<ChoiceInstance>;

// Throw std::runtime_error naming the record id and offending field.
void validate(const MrcInstance& inst);
void validate(const ReInstance& inst);
void validate(const ChoiceInstance& inst);

void to_json(nlohmann::json& j, const EntityMention& m);
void from_json(const nlohmann::json& j, EntityMention& m);
void to_json(nlohmann::json& j, const MrcInstance& inst);
void from_json(const nlohmann::json& j, MrcInstance& inst);
void to_json(nlohmann::json& j, const ReInstance& inst);
void from_json(const nlohmann::json& j, ReInstance& inst);
void to_json(nlohmann::json& j, const ChoiceInstance& inst);
void from_json(const nlohmann::json& j, ChoiceInstance& inst);

// JSONL loaders: one record per line, validated, duplicate ids rejected.
// Errors carry the path and 1-based line number.
template <typename T>
Dataset<T> load_dataset(const std::string& path);

template <typename T>
void save_dataset(const Dataset<T>& ds, const std::string& path);

extern template Dataset<MrcInstance> load_dataset<MrcInstance>(const std::string&);
extern template Dataset<ReInstance> load_dataset<ReInstance>(const std::string&);
extern template Dataset<ChoiceInstance> load_dataset<ChoiceInstance>(const std::string&);
extern template void save_dataset<MrcInstance>(const Dataset<MrcInstance>&, const std::string&);
extern template void save_dataset<ReInstance>(const Dataset<ReInstance>&, const std::string&);
extern template void save_dataset<ChoiceInstance>(const Dataset<ChoiceInstance>&, const std::string&);

// entity_type -> distinct surface forms, both levels sorted so that
// iteration (and therefore sampling) order is reproducible.
using EntityInventory = std::map<std::string, std::set<std::string>>;

EntityInventory build_entity_inventory(const MrcDataset& ds);
EntityInventory build_entity_inventory(const ReDataset& ds);

}  // namespace ctxfaith

#include "ctxfaith/corpus.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "ctxfaith/utf8.hpp"
#include "ctxfaith/util.hpp"

namespace ctxfaith {

using nlohmann::json;

Schema schema_from_string(const std::string& s) {
    if (s == "mrc") return Schema::mrc;
    if (s == "re") return Schema::re;
    if (s == "choice") return Schema::choice;
    throw std::runtime_error("unknown schema '" + s + "' (expected mrc, re or choice)");
}

std::string to_string(Schema s) {
    switch (s) {
        case Schema::mrc: return "mrc";
        case Schema::re: return "re";
        case Schema::choice: return "choice";
    }
    throw std::logic_error("unreachable");
}

namespace {

[[noreturn]] void fail(const std::string& id, const std::string& msg) {
    throw std::runtime_error("record '" + id + "': " + msg);
}

void check_mention(const std::string& id, const char* field, const EntityMention& m,
                   const std::string& context) {
    if (m.surface.empty()) fail(id, std::string(field) + ".surface is empty");
    if (m.entity_type.empty()) fail(id, std::string(field) + ".entity_type is empty");
    if (m.span.end < m.span.start) fail(id, std::string(field) + ".span end before start");
    std::size_t len = utf8::cp_count(context);
    if (m.span.end > len)
        fail(id, std::string(field) + ".span [" + std::to_string(m.span.start) + ", " +
                     std::to_string(m.span.end) + ") out of bounds (context has " +
                     std::to_string(len) + " code points)");
    auto sub = utf8::slice(context, m.span.start, m.span.end);
    if (sub != m.surface)
        fail(id, std::string(field) + ".span text '" + std::string(sub) + "' != surface '" + m.surface + "'");
}

}  // namespace

void validate(const MrcInstance& inst) {
    if (inst.id.empty()) throw std::runtime_error("record with empty id");
    if (inst.answers.empty()) fail(inst.id, "answers must be non-empty");
    if (inst.answer_span) {
        const Span& sp = *inst.answer_span;
        if (sp.end < sp.start) fail(inst.id, "answer_span end before start");
        std::size_t len = utf8::cp_count(inst.context);
        if (sp.end > len)
            fail(inst.id, "answer_span [" + std::to_string(sp.start) + ", " + std::to_string(sp.end) +
                              ") out of bounds (context has " + std::to_string(len) + " code points)");
        auto sub = utf8::slice(inst.context, sp.start, sp.end);
        if (sub != inst.answers[0])
            fail(inst.id, "answer_span text '" + std::string(sub) + "' != answers[0] '" + inst.answers[0] + "'");
    }
}

void validate(const ReInstance& inst) {
    if (inst.id.empty()) throw std::runtime_error("record with empty id");
    if (inst.relation.empty()) fail(inst.id, "relation is empty");
    check_mention(inst.id, "subj", inst.subj, inst.context);
    check_mention(inst.id, "obj", inst.obj, inst.context);
    const Span& a = inst.subj.span;
    const Span& b = inst.obj.span;
    bool disjoint = a.end <= b.start || b.end <= a.start;
    if (!disjoint) fail(inst.id, "subj and obj spans overlap");
}

void validate(const ChoiceInstance& inst) {
    if (inst.id.empty()) throw std::runtime_error("record with empty id");
    if (inst.choices.empty()) fail(inst.id, "choices must be non-empty");
    if (inst.gold_index < 0 || static_cast<std::size_t>(inst.gold_index) >= inst.choices.size())
        fail(inst.id, "gold_index " + std::to_string(inst.gold_index) + " out of range (" +
                          std::to_string(inst.choices.size()) + " choices)");
    std::unordered_set<std::string> seen;
    for (const auto& c : inst.choices) {
        if (!seen.insert(c).second) fail(inst.id, "duplicate choice '" + c + "'");
    }
}

static Span span_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) throw std::runtime_error("span must be a [start, end] array");
    return Span{j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

static json span_to_json(const Span& sp) { return json::array({sp.start, sp.end}); }

void to_json(json& j, const EntityMention& m) {
    j = json{{"surface", m.surface}, {"entity_type", m.entity_type}, {"span", span_to_json(m.span)}};
}

void from_json(const json& j, EntityMention& m) {
    m.surface = j.at("surface").get<std::string>();
    m.entity_type = j.at("entity_type").get<std::string>();
    m.span = span_from_json(j.at("span"));
}

void to_json(json& j, const MrcInstance& inst) {
    j = json{{"id", inst.id},
             {"context", inst.context},
             {"question", inst.question},
             {"answers", inst.answers}};
    if (inst.answer_span) j["answer_span"] = span_to_json(*inst.answer_span);
    if (inst.answer_entity_type) j["answer_entity_type"] = *inst.answer_entity_type;
}

void from_json(const json& j, MrcInstance& inst) {
    inst.id = j.at("id").get<std::string>();
    inst.context = j.at("context").get<std::string>();
    inst.question = j.at("question").get<std::string>();
    inst.answers = j.at("answers").get<std::vector<std::string>>();
    inst.answer_span.reset();
    inst.answer_entity_type.reset();
    if (j.contains("answer_span") && !j["answer_span"].is_null())
        inst.answer_span = span_from_json(j["answer_span"]);
    if (j.contains("answer_entity_type") && !j["answer_entity_type"].is_null())
        inst.answer_entity_type = j["answer_entity_type"].get<std::string>();
}

void to_json(json& j, const ReInstance& inst) {
    j = json{{"id", inst.id},
             {"context", inst.context},
             {"subj", inst.subj},
             {"obj", inst.obj},
             {"relation", inst.relation}};
}

void from_json(const json& j, ReInstance& inst) {
    inst.id = j.at("id").get<std::string>();
    inst.context = j.at("context").get<std::string>();
    inst.subj = j.at("subj").get<EntityMention>();
    inst.obj = j.at("obj").get<EntityMention>();
    inst.relation = j.at("relation").get<std::string>();
}

void to_json(json& j, const ChoiceInstance& inst) {
    j = json{{"id", inst.id},
             {"documents", inst.documents},
             {"question", inst.question},
             {"choices", inst.choices},
             {"gold_index", inst.gold_index},
             {"answerable", inst.answerable}};
}

void from_json(const json& j, ChoiceInstance& inst) {
    inst.id = j.at("id").get<std::string>();
    inst.documents = j.at("documents").get<std::vector<std::string>>();
    inst.question = j.at("question").get<std::string>();
    inst.choices = j.at("choices").get<std::vector<std::string>>();
    inst.gold_index = j.at("gold_index").get<int>();
    inst.answerable = j.at("answerable").get<bool>();
}

template <typename T>
Dataset<T> load_dataset(const std::string& path) {
    Dataset<T> ds;
    std::unordered_set<std::string> ids;
    for_each_line(path, [&](std::size_t line_no, const std::string& line) {
        if (line.empty()) return;
        T inst;
        try {
            json j = json::parse(line);
            inst = j.get<T>();
            validate(inst);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!ids.insert(inst.id).second)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": duplicate id '" + inst.id + "'");
        ds.items.push_back(std::move(inst));
    });
    return ds;
}

template <typename T>
void save_dataset(const Dataset<T>& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (const auto& item : ds.items) {
        json j = item;
        os << j.dump() << '\n';
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

template Dataset<MrcInstance> load_dataset<MrcInstance>(const std::string&);
template Dataset<ReInstance> load_dataset<ReInstance>(const std::string&);
template Dataset<ChoiceInstance> load_dataset<ChoiceInstance>(const std::string&);
template void save_dataset<MrcInstance>(const Dataset<MrcInstance>&, const std::string&);
template void save_dataset<ReInstance>(const Dataset<ReInstance>&, const std::string&);
template void save_dataset<ChoiceInstance>(const Dataset<ChoiceInstance>&, const std::string&);

EntityInventory build_entity_inventory(const MrcDataset& ds) {
    EntityInventory inv;
    for (const auto& inst : ds.items) {
        if (!inst.answer_entity_type || inst.answers.empty()) continue;
        if (inst.answers[0].empty()) continue;
        inv[*inst.answer_entity_type].insert(inst.answers[0]);
    }
    if (inv.empty()) throw std::runtime_error("no typed entities in corpus");
    return inv;
}

EntityInventory build_entity_inventory(const ReDataset& ds) {
    EntityInventory inv;
    for (const auto& inst : ds.items) {
        inv[inst.subj.entity_type].insert(inst.subj.surface);
        inv[inst.obj.entity_type].insert(inst.obj.surface);
    }
    if (inv.empty()) throw std::runtime_error("no typed entities in corpus");
    return inv;
}

}  // namespace ctxfaith

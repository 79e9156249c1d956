#include "ctxfaith/counterfactual.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "ctxfaith/metrics.hpp"
#include "ctxfaith/utf8.hpp"
#include "ctxfaith/util.hpp"

namespace ctxfaith {

using nlohmann::json;

MrcCounterfactual substitute_mrc(const MrcInstance& instance, const EntityInventory& inventory,
                                 std::uint64_t seed) {
    if (!instance.answer_entity_type)
        throw std::runtime_error("instance '" + instance.id + "' has no answer_entity_type");
    const std::string& type = *instance.answer_entity_type;
    auto it = inventory.find(type);
    if (it == inventory.end())
        throw std::runtime_error("entity type '" + type + "' missing from inventory");

    std::vector<std::string> normalized_originals;
    normalized_originals.reserve(instance.answers.size());
    for (const auto& a : instance.answers) normalized_originals.push_back(normalize_text(a));

    // Candidates come out of the set already sorted, so the draw below is a
    // pure function of (id, seed, inventory contents).
    std::vector<const std::string*> candidates;
    for (const auto& surface : it->second) {
        std::string norm = normalize_text(surface);
        bool alias = std::find(normalized_originals.begin(), normalized_originals.end(), norm) !=
                     normalized_originals.end();
        if (!alias) candidates.push_back(&surface);
    }
    if (candidates.empty())
        throw std::runtime_error("no distinct replacement of type '" + type + "' for instance '" +
                                 instance.id + "'");

    DetRng rng(instance_seed(instance.id, seed));
    const std::string& replacement = *candidates[rng.bounded(candidates.size())];

    Span target;
    if (instance.answer_span) {
        target = *instance.answer_span;
    } else {
        std::size_t at = utf8::find_cp(instance.context, instance.answers[0]);
        if (at == utf8::npos)
            throw std::runtime_error("instance '" + instance.id + "': answers[0] '" +
                                     instance.answers[0] + "' not found in context");
        target = Span{at, at + utf8::cp_count(instance.answers[0])};
    }

    MrcCounterfactual record;
    record.derived = instance;
    record.derived.context = utf8::replace_range(instance.context, target.start, target.end, replacement);
    record.derived.answers = {replacement};
    record.derived.answer_span = Span{target.start, target.start + utf8::cp_count(replacement)};
    record.original_answers = instance.answers;
    record.substituted_answers = {replacement};
    record.provenance = Provenance{instance.id, std::nullopt, seed};
    validate(record.derived);
    return record;
}

namespace {

// Splice two replacement surfaces into a context, recomputing both spans.
// The later span is rewritten first so earlier offsets stay valid.
struct Splice {
    std::string context;
    Span first_span;   // span of the replacement written over `first`
    Span second_span;  // span of the replacement written over `second`
};

Splice splice_two(const std::string& context, const Span& first, const std::string& first_repl,
                  const Span& second, const std::string& second_repl) {
    if (second.start < first.end)
        throw std::runtime_error("splice_two: spans out of order or overlapping");
    std::string out = utf8::replace_range(context, second.start, second.end, second_repl);
    out = utf8::replace_range(out, first.start, first.end, first_repl);
    std::size_t first_len = utf8::cp_count(first_repl);
    std::size_t second_len = utf8::cp_count(second_repl);
    std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(first_len) -
                           static_cast<std::ptrdiff_t>(first.end - first.start);
    Span new_first{first.start, first.start + first_len};
    std::size_t second_start = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(second.start) + shift);
    Span new_second{second_start, second_start + second_len};
    return Splice{std::move(out), new_first, new_second};
}

}  // namespace

ReCounterfactual swap_re(const ReInstance& instance, const ReDataset& pool, std::uint64_t seed) {
    std::vector<const ReInstance*> donors;
    for (const auto& cand : pool.items) {
        if (cand.id == instance.id) continue;
        if (cand.subj.entity_type != instance.subj.entity_type) continue;
        if (cand.obj.entity_type != instance.obj.entity_type) continue;
        if (cand.relation == instance.relation) continue;
        donors.push_back(&cand);
    }
    if (donors.empty())
        throw std::runtime_error("no eligible donor for type pair (" + instance.subj.entity_type +
                                 ", " + instance.obj.entity_type + ") with relation != '" +
                                 instance.relation + "'");

    DetRng rng(instance_seed(instance.id, seed));
    const ReInstance& donor = *donors[rng.bounded(donors.size())];

    bool subj_first = donor.subj.span.start < donor.obj.span.start;
    Splice spliced = subj_first
        ? splice_two(donor.context, donor.subj.span, instance.subj.surface,
                     donor.obj.span, instance.obj.surface)
        : splice_two(donor.context, donor.obj.span, instance.obj.surface,
                     donor.subj.span, instance.subj.surface);

    ReCounterfactual record;
    record.derived.id = instance.id;
    record.derived.context = std::move(spliced.context);
    record.derived.subj = EntityMention{instance.subj.surface, instance.subj.entity_type,
                                        subj_first ? spliced.first_span : spliced.second_span};
    record.derived.obj = EntityMention{instance.obj.surface, instance.obj.entity_type,
                                       subj_first ? spliced.second_span : spliced.first_span};
    record.derived.relation = donor.relation;
    record.original_answers = {instance.relation};
    record.substituted_answers = {donor.relation};
    record.provenance = Provenance{instance.id, donor.id, seed};
    validate(record.derived);
    return record;
}

ChoiceInstance augment_abstention(const ChoiceInstance& instance, const std::string& idk_text) {
    for (const auto& c : instance.choices) {
        if (c == idk_text)
            throw std::runtime_error("record '" + instance.id + "': choice '" + idk_text +
                                     "' already present");
    }
    ChoiceInstance out = instance;
    out.choices.push_back(idk_text);
    if (!out.answerable) out.gold_index = static_cast<int>(out.choices.size()) - 1;
    validate(out);
    return out;
}

void to_json(json& j, const Provenance& p) {
    j = json{{"source_id", p.source_id}, {"seed", p.seed}};
    if (p.donor_id) j["donor_id"] = *p.donor_id;
}

void from_json(const json& j, Provenance& p) {
    p.source_id = j.at("source_id").get<std::string>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.donor_id.reset();
    if (j.contains("donor_id") && !j["donor_id"].is_null())
        p.donor_id = j["donor_id"].get<std::string>();
}

template <typename T>
std::vector<CounterfactualRecord<T>> load_counterfactuals(const std::string& path) {
    std::vector<CounterfactualRecord<T>> out;
    for_each_line(path, [&](std::size_t line_no, const std::string& line) {
        if (line.empty()) return;
        try {
            json j = json::parse(line);
            CounterfactualRecord<T> r = j.get<CounterfactualRecord<T>>();
            validate(r.derived);
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return out;
}

template <typename T>
void save_counterfactuals(const std::vector<CounterfactualRecord<T>>& records, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (const auto& r : records) {
        json j = r;
        os << j.dump() << '\n';
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

template std::vector<MrcCounterfactual> load_counterfactuals<MrcInstance>(const std::string&);
template std::vector<ReCounterfactual> load_counterfactuals<ReInstance>(const std::string&);
template void save_counterfactuals<MrcInstance>(const std::vector<MrcCounterfactual>&, const std::string&);
template void save_counterfactuals<ReInstance>(const std::vector<ReCounterfactual>&, const std::string&);

}  // namespace ctxfaith

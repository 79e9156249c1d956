#include "doctest.h"

#include "ctxfaith/counterfactual.hpp"
#include "ctxfaith/metrics.hpp"
#include "ctxfaith/utf8.hpp"
#include "helpers.hpp"

using namespace ctxfaith;

namespace {

MrcInstance gaga_instance() {
    MrcInstance inst;
    inst.id = "nq-42";
    inst.context = "The 2017 show was headlined by Lady Gaga at the stadium.";
    inst.question = "who headlined the show";
    inst.answers = {"Lady Gaga"};
    inst.answer_span = Span{31, 40};
    inst.answer_entity_type = "PERSON";
    return inst;
}

ReInstance re_instance(const std::string& id, const std::string& context, const std::string& subj,
                       Span subj_span, const std::string& obj, Span obj_span,
                       const std::string& relation, const std::string& subj_type = "PERSON",
                       const std::string& obj_type = "ORG") {
    ReInstance inst;
    inst.id = id;
    inst.context = context;
    inst.subj = EntityMention{subj, subj_type, subj_span};
    inst.obj = EntityMention{obj, obj_type, obj_span};
    inst.relation = relation;
    return inst;
}

}  // namespace

TEST_CASE("substitute_mrc swaps the gold entity for a same-type alternative") {
    EntityInventory inv{{"PERSON", {"Lady Gaga", "Bosco"}}};
    auto rec = substitute_mrc(gaga_instance(), inv, 7);
    CHECK(rec.derived.context == "The 2017 show was headlined by Bosco at the stadium.");
    CHECK(rec.derived.answers == std::vector<std::string>{"Bosco"});
    CHECK(rec.substituted_answers == std::vector<std::string>{"Bosco"});
    CHECK(rec.original_answers == std::vector<std::string>{"Lady Gaga"});
    CHECK(rec.derived.answer_span->start == 31);
    CHECK(rec.derived.answer_span->end == 36);
    CHECK(rec.provenance.source_id == "nq-42");
    CHECK(rec.provenance.seed == 7);
    CHECK_FALSE(rec.provenance.donor_id.has_value());
}

TEST_CASE("substitute_mrc is deterministic and seed-sensitive") {
    EntityInventory inv{{"PERSON", {"Lady Gaga", "Bosco", "Adele", "Prince", "Shakira"}}};
    auto a = substitute_mrc(gaga_instance(), inv, 11);
    auto b = substitute_mrc(gaga_instance(), inv, 11);
    CHECK(a == b);
    bool any_differs = false;
    for (std::uint64_t seed = 0; seed < 16 && !any_differs; ++seed)
        any_differs = substitute_mrc(gaga_instance(), inv, seed).substituted_answers !=
                      a.substituted_answers;
    CHECK(any_differs);
}

TEST_CASE("substitute_mrc failure modes") {
    SUBCASE("inventory holding only the original") {
        EntityInventory inv{{"PERSON", {"Lady Gaga"}}};
        CHECK_THROWS_WITH_AS(substitute_mrc(gaga_instance(), inv, 1),
                             doctest::Contains("no distinct replacement"), std::runtime_error);
    }
    SUBCASE("alias guard blocks normalized collisions") {
        EntityInventory inv{{"PERSON", {"Lady Gaga", "the Lady Gaga!"}}};
        CHECK_THROWS_WITH_AS(substitute_mrc(gaga_instance(), inv, 1),
                             doctest::Contains("no distinct replacement"), std::runtime_error);
    }
    SUBCASE("type missing from inventory") {
        EntityInventory inv{{"ORG", {"Acme"}}};
        CHECK_THROWS_WITH_AS(substitute_mrc(gaga_instance(), inv, 1),
                             doctest::Contains("missing from inventory"), std::runtime_error);
    }
    SUBCASE("instance without a type annotation") {
        auto inst = gaga_instance();
        inst.answer_entity_type.reset();
        EntityInventory inv{{"PERSON", {"Bosco"}}};
        CHECK_THROWS(substitute_mrc(inst, inv, 1));
    }
}

TEST_CASE("substitute_mrc without a span replaces the first occurrence") {
    auto inst = gaga_instance();
    inst.answer_span.reset();
    inst.context = "Lady Gaga praised Lady Gaga.";
    EntityInventory inv{{"PERSON", {"Lady Gaga", "Bosco"}}};
    auto rec = substitute_mrc(inst, inv, 3);
    CHECK(rec.derived.context == "Bosco praised Lady Gaga.");
    CHECK(rec.derived.answer_span->start == 0);
}

TEST_CASE("substitute_mrc handles spans at the context boundaries") {
    EntityInventory inv{{"PERSON", {"Lady Gaga", "Bosco"}}};
    SUBCASE("offset zero") {
        auto inst = gaga_instance();
        inst.context = "Lady Gaga sang.";
        inst.answer_span = Span{0, 9};
        auto rec = substitute_mrc(inst, inv, 5);
        CHECK(rec.derived.context == "Bosco sang.");
    }
    SUBCASE("end of context") {
        auto inst = gaga_instance();
        inst.context = "The act was Lady Gaga";
        inst.answer_span = Span{12, 21};
        auto rec = substitute_mrc(inst, inv, 5);
        CHECK(rec.derived.context == "The act was Bosco");
        CHECK(rec.derived.answer_span->end == utf8::cp_count(rec.derived.context));
    }
    SUBCASE("unicode prefix keeps code-point arithmetic honest") {
        auto inst = gaga_instance();
        inst.context = "Früh sang Lady Gaga im Zelt.";
        inst.answer_span = Span{10, 19};
        auto rec = substitute_mrc(inst, inv, 5);
        CHECK(rec.derived.context == "Früh sang Bosco im Zelt.");
        CHECK(rec.derived.answer_span->start == 10);
        CHECK(rec.derived.answer_span->end == 15);
    }
}

TEST_CASE("substitute_mrc changes exactly one contiguous region") {
    EntityInventory inv{{"PERSON", {"Lady Gaga", "Bosco", "Christina Aguilera"}}};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto inst = gaga_instance();
        auto rec = substitute_mrc(inst, inv, seed);
        const std::string& sub = rec.substituted_answers[0];
        CHECK(normalize_text(sub) != normalize_text(inst.answers[0]));
        CHECK(rec.derived.context.find(sub) != std::string::npos);
        std::string expect = utf8::replace_range(inst.context, inst.answer_span->start,
                                                 inst.answer_span->end, sub);
        CHECK(rec.derived.context == expect);
    }
}

TEST_CASE("swap_re takes a donor context and inserts the original entities") {
    auto original = re_instance("r1", "Alice founded Acme.", "Alice", Span{0, 5}, "Acme",
                                Span{14, 18}, "org:founded_by");
    auto donor = re_instance("r2", "Bob works for BetaCorp these days.", "Bob", Span{0, 3},
                             "BetaCorp", Span{14, 22}, "org:employee_of");
    ReDataset pool;
    pool.items = {original, donor};

    auto rec = swap_re(original, pool, 9);
    CHECK(rec.derived.context == "Alice works for Acme these days.");
    CHECK(rec.derived.relation == "org:employee_of");
    CHECK(rec.derived.subj.surface == "Alice");
    CHECK(rec.derived.subj.span == Span{0, 5});
    CHECK(rec.derived.obj.surface == "Acme");
    CHECK(rec.derived.obj.span == Span{16, 20});
    CHECK(rec.original_answers == std::vector<std::string>{"org:founded_by"});
    CHECK(rec.substituted_answers == std::vector<std::string>{"org:employee_of"});
    CHECK(rec.provenance.donor_id == "r2");
    CHECK(swap_re(original, pool, 9) == rec);
}

TEST_CASE("swap_re handles reversed mention order and boundary spans") {
    auto original = re_instance("r1", "Alice founded Acme.", "Alice", Span{0, 5}, "Acme",
                                Span{14, 18}, "org:founded_by");
    SUBCASE("object appears before subject in the donor") {
        auto donor = re_instance("r2", "BetaCorp employs Bob", "Bob", Span{17, 20}, "BetaCorp",
                                 Span{0, 8}, "org:employee_of");
        ReDataset pool;
        pool.items = {donor};
        auto rec = swap_re(original, pool, 4);
        CHECK(rec.derived.context == "Acme employs Alice");
        CHECK(rec.derived.obj.span == Span{0, 4});
        CHECK(rec.derived.subj.span == Span{13, 18});
    }
    SUBCASE("donor spans touch offset zero and the context end") {
        auto donor = re_instance("r2", "Bob quit BetaCorp", "Bob", Span{0, 3}, "BetaCorp",
                                 Span{9, 17}, "per:left_org");
        ReDataset pool;
        pool.items = {donor};
        auto rec = swap_re(original, pool, 4);
        CHECK(rec.derived.context == "Alice quit Acme");
        CHECK(rec.derived.obj.span.end == utf8::cp_count(rec.derived.context));
    }
}

TEST_CASE("swap_re donor eligibility") {
    auto original = re_instance("r1", "Alice founded Acme.", "Alice", Span{0, 5}, "Acme",
                                Span{14, 18}, "org:founded_by");
    SUBCASE("donors sharing the relation are rejected") {
        auto donor = re_instance("r2", "Bob founded BetaCorp.", "Bob", Span{0, 3}, "BetaCorp",
                                 Span{12, 20}, "org:founded_by");
        ReDataset pool;
        pool.items = {original, donor};
        CHECK_THROWS_WITH_AS(swap_re(original, pool, 1), doctest::Contains("(PERSON, ORG)"),
                             std::runtime_error);
    }
    SUBCASE("type pair must match") {
        auto donor = re_instance("r2", "Paris hosts Acme.", "Paris", Span{0, 5}, "Acme",
                                 Span{12, 16}, "org:based_in", "CITY", "ORG");
        ReDataset pool;
        pool.items = {donor};
        CHECK_THROWS_AS(swap_re(original, pool, 1), std::runtime_error);
    }
    SUBCASE("the instance itself never acts as donor") {
        ReDataset pool;
        pool.items = {original};
        CHECK_THROWS_AS(swap_re(original, pool, 1), std::runtime_error);
    }
}

TEST_CASE("augment_abstention") {
    ChoiceInstance inst;
    inst.id = "c1";
    inst.documents = {"doc"};
    inst.question = "pick one";
    inst.choices = {"A", "B", "C"};
    inst.gold_index = 1;

    SUBCASE("unanswerable relabels gold to the new last choice") {
        inst.answerable = false;
        auto out = augment_abstention(inst, "I don't know");
        CHECK(out.choices == std::vector<std::string>{"A", "B", "C", "I don't know"});
        CHECK(out.gold_index == 3);
    }
    SUBCASE("answerable keeps its gold index") {
        inst.answerable = true;
        auto out = augment_abstention(inst, "I don't know");
        CHECK(out.gold_index == 1);
        CHECK(out.choices.size() == 4);
    }
    SUBCASE("duplicate abstention text is rejected") {
        inst.choices.push_back("I don't know");
        CHECK_THROWS_WITH_AS(augment_abstention(inst, "I don't know"),
                             doctest::Contains("already present"), std::runtime_error);
    }
}

TEST_CASE("counterfactual records round-trip through JSONL") {
    TempDir tmp;
    EntityInventory inv{{"PERSON", {"Lady Gaga", "Bosco"}}};
    std::vector<MrcCounterfactual> records{substitute_mrc(gaga_instance(), inv, 7)};
    save_counterfactuals(records, tmp.file("cf.jsonl"));
    auto loaded = load_counterfactuals<MrcInstance>(tmp.file("cf.jsonl"));
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0] == records[0]);

    auto original = re_instance("r1", "Alice founded Acme.", "Alice", Span{0, 5}, "Acme",
                                Span{14, 18}, "org:founded_by");
    auto donor = re_instance("r2", "Bob works for BetaCorp these days.", "Bob", Span{0, 3},
                             "BetaCorp", Span{14, 22}, "org:employee_of");
    ReDataset pool;
    pool.items = {original, donor};
    std::vector<ReCounterfactual> re_records{swap_re(original, pool, 9)};
    save_counterfactuals(re_records, tmp.file("re.jsonl"));
    auto re_loaded = load_counterfactuals<ReInstance>(tmp.file("re.jsonl"));
    REQUIRE(re_loaded.size() == 1);
    CHECK(re_loaded[0] == re_records[0]);
    CHECK(re_loaded[0].provenance.donor_id == "r2");
}

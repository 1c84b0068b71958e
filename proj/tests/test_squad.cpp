#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "lingqa/squad.hpp"
#include "support/synth.hpp"

using namespace lingqa;

namespace {

std::string write_file(const std::string& dir, const std::string& name, const std::string& body) {
    const std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    out << body;
    return path;
}

template <typename F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const QaError& e) {
        return e.kind();
    }
    FAIL("expected QaError");
    return ErrorKind::IoError;
}

const char* kMinimal = R"({
  "data": [{"title": "T", "paragraphs": [{
    "context": "Avalon was founded early.",
    "qas": [{"id": "q1", "question": "What was founded?",
             "answers": [{"text": "Avalon", "answer_start": 0}],
             "is_impossible": false}]
  }]}]
})";

}  // namespace

TEST_CASE("load_dataset parses a minimal answerable file") {
    auto dir = synth::temp_dir("squad_min");
    Dataset ds = load_dataset(write_file(dir, "min.json", kMinimal));
    REQUIRE(ds.size() == 1);
    const QaExample& ex = ds.examples[0];
    CHECK(ex.qid == "q1");
    CHECK(ex.article_title == "T");
    CHECK(ex.paragraph_index == 0);
    CHECK_FALSE(ex.is_impossible);
    REQUIRE(ex.gold_answers.size() == 1);
    CHECK(ex.gold_answers[0].text == "Avalon");
}

TEST_CASE("unanswerable example keeps empty gold answers") {
    auto dir = synth::temp_dir("squad_imp");
    const char* body = R"({"data": [{"title": "T", "paragraphs": [{
        "context": "Nothing here.",
        "qas": [{"id": "q1", "question": "Who?", "answers": [], "is_impossible": true}]
    }]}]})";
    Dataset ds = load_dataset(write_file(dir, "imp.json", body));
    REQUIRE(ds.size() == 1);
    CHECK(ds.examples[0].is_impossible);
    CHECK(ds.examples[0].gold_answers.empty());
}

TEST_CASE("missing is_impossible key defaults to answerable (v1.1 files)") {
    auto dir = synth::temp_dir("squad_v11");
    const char* body = R"({"data": [{"title": "T", "paragraphs": [{
        "context": "Avalon stands.",
        "qas": [{"id": "q1", "question": "What stands?",
                 "answers": [{"text": "Avalon", "answer_start": 0}]}]
    }]}]})";
    Dataset ds = load_dataset(write_file(dir, "v11.json", body));
    CHECK_FALSE(ds.examples[0].is_impossible);
}

TEST_CASE("answer offset outside the context is a SpanMismatch") {
    auto dir = synth::temp_dir("squad_span");
    const char* body = R"({"data": [{"title": "T", "paragraphs": [{
        "context": "ten chars.",
        "qas": [{"id": "q1", "question": "?", "answers": [{"text": "x", "answer_start": 50}],
                 "is_impossible": false}]
    }]}]})";
    auto path = write_file(dir, "span.json", body);
    CHECK(kind_of([&] { load_dataset(path); }) == ErrorKind::SpanMismatch);
}

TEST_CASE("answer text disagreeing with the slice is a SpanMismatch") {
    auto dir = synth::temp_dir("squad_span2");
    const char* body = R"({"data": [{"title": "T", "paragraphs": [{
        "context": "Avalon was founded.",
        "qas": [{"id": "q1", "question": "?", "answers": [{"text": "Avalon", "answer_start": 3}],
                 "is_impossible": false}]
    }]}]})";
    auto path = write_file(dir, "span2.json", body);
    CHECK(kind_of([&] { load_dataset(path); }) == ErrorKind::SpanMismatch);
}

TEST_CASE("unparseable input is MalformedJson; missing fields are SchemaViolations") {
    auto dir = synth::temp_dir("squad_bad");
    auto bad = write_file(dir, "bad.json", "{not json");
    CHECK(kind_of([&] { load_dataset(bad); }) == ErrorKind::MalformedJson);

    auto nofield = write_file(dir, "nofield.json",
                              R"({"data": [{"title": "T", "paragraphs": [{
        "context": "c", "qas": [{"id": "q1", "answers": []}]}]}]})");
    CHECK(kind_of([&] { load_dataset(nofield); }) == ErrorKind::SchemaViolation);

    auto dup = write_file(dir, "dup.json", R"({"data": [{"title": "T", "paragraphs": [{
        "context": "c",
        "qas": [{"id": "q1", "question": "?", "answers": []},
                {"id": "q1", "question": "?", "answers": []}]}]}]})");
    CHECK(kind_of([&] { load_dataset(dup); }) == ErrorKind::SchemaViolation);
}

TEST_CASE("unicode contexts validate offsets over codepoints") {
    auto dir = synth::temp_dir("squad_uni");
    // "Čech" starts at codepoint 4 ("der " prefix)
    const char* body = R"({"data": [{"title": "T", "paragraphs": [{
        "context": "der Čech spricht",
        "qas": [{"id": "q1", "question": "?", "answers": [{"text": "Čech", "answer_start": 4}],
                 "is_impossible": false}]
    }]}]})";
    Dataset ds = load_dataset(write_file(dir, "uni.json", body));
    REQUIRE(ds.size() == 1);
    CHECK(ds.examples[0].gold_answers[0].text == "Čech");
}

TEST_CASE("round trip: every gold answer equals its context slice") {
    auto dir = synth::temp_dir("squad_rt");
    Dataset ds = load_dataset(synth::write_squad_file(dir, "synth.json", {64, 4, 11, 0}));
    REQUIRE(ds.size() == 64);
    for (const auto& ex : ds.examples) {
        for (const auto& g : ex.gold_answers) {
            auto len = utf8_length(g.text);
            CHECK(utf8_slice(ex.context, g.answer_start, g.answer_start + len) == g.text);
        }
        CHECK(ex.is_impossible == ex.gold_answers.empty());
    }
}

TEST_CASE("parsing is pure: loading the same file twice is identical") {
    auto dir = synth::temp_dir("squad_pure");
    auto path = synth::write_squad_file(dir, "synth.json", {16, 4, 3, 0});
    Dataset a = load_dataset(path);
    Dataset b = load_dataset(path);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.examples[i].qid == b.examples[i].qid);
        CHECK(a.examples[i].context == b.examples[i].context);
        CHECK(a.examples[i].question == b.examples[i].question);
        CHECK(a.examples[i].is_impossible == b.examples[i].is_impossible);
    }
}

TEST_CASE("split_subset selects deterministically") {
    auto dir = synth::temp_dir("squad_split");
    Dataset ds = load_dataset(synth::write_squad_file(dir, "synth.json", {100, 4, 5, 0}));

    SECTION("n equal to the dataset size is a permutation") {
        Dataset all = split_subset(ds, ds.size(), 9);
        std::set<std::string> original, permuted;
        for (const auto& ex : ds.examples) original.insert(ex.qid);
        for (const auto& ex : all.examples) permuted.insert(ex.qid);
        CHECK(original == permuted);
    }

    SECTION("n = 1 twice with the same seed picks the same example") {
        Dataset one_a = split_subset(ds, 1, 123);
        Dataset one_b = split_subset(ds, 1, 123);
        CHECK(one_a.examples[0].qid == one_b.examples[0].qid);
    }

    SECTION("n = 32 of 100 yields 32 distinct qids") {
        Dataset sub = split_subset(ds, 32, 5);
        std::set<std::string> qids;
        for (const auto& ex : sub.examples) qids.insert(ex.qid);
        CHECK(qids.size() == 32);
    }

    SECTION("out-of-range counts are BadCount") {
        CHECK(kind_of([&] { split_subset(ds, 0, 1); }) == ErrorKind::BadCount);
        CHECK(kind_of([&] { split_subset(ds, 101, 1); }) == ErrorKind::BadCount);
    }
}

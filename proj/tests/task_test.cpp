#include <gtest/gtest.h>

#include <set>
#include <string>

#include "llmbench/task.hpp"
#include "test_util.hpp"

using namespace llmbench;
using testutil::TempDir;
using testutil::write_file;

namespace {

TEST(GeneratePrompts, DeterministicSubsample) {
    TempDir dir;
    const std::string path = write_file(dir.file("mmlu.jsonl"), testutil::mmlu_dataset(1000));
    const PromptSet a = generate_prompts(TaskKind::mmlu, path, 64, 7);
    const PromptSet b = generate_prompts(TaskKind::mmlu, path, 64, 7);
    ASSERT_EQ(a.instances.size(), 64u);
    for (size_t i = 0; i < 64; ++i) {
        EXPECT_EQ(a.instances[i].id, b.instances[i].id);
        EXPECT_EQ(a.instances[i].prompt, b.instances[i].prompt);
    }
    // a different seed picks a different subset (overwhelmingly likely)
    const PromptSet c = generate_prompts(TaskKind::mmlu, path, 64, 8);
    bool any_diff = false;
    for (size_t i = 0; i < 64; ++i) any_diff |= (a.instances[i].id != c.instances[i].id);
    EXPECT_TRUE(any_diff);
}

TEST(GeneratePrompts, UniqueIdsWithinRun) {
    TempDir dir;
    const std::string path = write_file(dir.file("mmlu.jsonl"), testutil::mmlu_dataset(100));
    const PromptSet p = generate_prompts(TaskKind::mmlu, path, 50, 3);
    std::set<std::string> ids;
    for (const auto& inst : p.instances) ids.insert(inst.id);
    EXPECT_EQ(ids.size(), p.instances.size());
}

TEST(GeneratePrompts, FewerRecordsThanSamplesWarns) {
    TempDir dir;
    const std::string path = write_file(dir.file("mmlu.jsonl"), testutil::mmlu_dataset(10));
    const PromptSet p = generate_prompts(TaskKind::mmlu, path, 64, 7);
    EXPECT_EQ(p.instances.size(), 10u);
    ASSERT_EQ(p.warnings.size(), 1u);
    EXPECT_NE(p.warnings[0].find("10"), std::string::npos);
}

TEST(GeneratePrompts, MissingFileErrors) {
    EXPECT_THROW(generate_prompts(TaskKind::mmlu, "/nonexistent/x.jsonl", 4, 0), TaskError);
}

TEST(GeneratePrompts, MalformedRecordReportsLineNumber) {
    TempDir dir;
    const std::string path = write_file(
        dir.file("bad.jsonl"), testutil::mmlu_dataset(2) + "this is not json\n");
    try {
        generate_prompts(TaskKind::mmlu, path, 4, 0);
        FAIL() << "expected TaskError";
    } catch (const TaskError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(GeneratePrompts, EmptyDatasetErrors) {
    TempDir dir;
    const std::string path = write_file(dir.file("empty.jsonl"), "\n\n");
    EXPECT_THROW(generate_prompts(TaskKind::mmlu, path, 4, 0), TaskError);
}

TEST(GeneratePrompts, MmluPromptRendering) {
    TempDir dir;
    const std::string path = write_file(
        dir.file("one.jsonl"),
        R"({"question": "Pick B.", "choices": ["w", "x", "y", "z"], "answer": "B"})"
        "\n");
    const PromptSet p = generate_prompts(TaskKind::mmlu, path, 1, 0);
    ASSERT_EQ(p.instances.size(), 1u);
    const TaskInstance& inst = p.instances[0];
    EXPECT_NE(inst.prompt.find("Pick B."), std::string::npos);
    EXPECT_NE(inst.prompt.find("A. w"), std::string::npos);
    EXPECT_NE(inst.prompt.find("D. z"), std::string::npos);
    ASSERT_EQ(inst.references.size(), 1u);
    EXPECT_EQ(inst.references[0], "B");
}

TEST(GeneratePrompts, QaPromptCarriesQuestionContextAndGold) {
    TempDir dir;
    const std::string path = write_file(
        dir.file("qa.jsonl"),
        R"({"question": "Who?", "context": "Albert Einstein was a physicist.", "answers": ["Albert Einstein", "Einstein"]})"
        "\n");
    const PromptSet p = generate_prompts(TaskKind::qa, path, 1, 0);
    const TaskInstance& inst = p.instances[0];
    EXPECT_NE(inst.prompt.find("Who?"), std::string::npos);
    EXPECT_NE(inst.prompt.find("Albert Einstein was a physicist."), std::string::npos);
    ASSERT_EQ(inst.references.size(), 2u);
    EXPECT_EQ(inst.references[0], "Albert Einstein");
}

TEST(GeneratePrompts, QaUnanswerableHasNoReferences) {
    TempDir dir;
    const std::string path = write_file(
        dir.file("qa.jsonl"),
        R"({"question": "Who?", "context": "No one.", "answers": []})"
        "\n");
    const PromptSet p = generate_prompts(TaskKind::qa, path, 1, 0);
    EXPECT_TRUE(p.instances[0].references.empty());
}

TEST(GeneratePrompts, SqlAuxRouting) {
    TempDir dir;
    const std::string path = write_file(
        dir.file("sql.jsonl"),
        R"({"question": "count rows", "db_path": "fixtures/demo.db", "gold_sql": "SELECT COUNT(*) FROM t"})"
        "\n");
    const PromptSet p = generate_prompts(TaskKind::sql, path, 1, 0);
    const TaskInstance& inst = p.instances[0];
    // relative db paths resolve against the dataset directory
    EXPECT_EQ(inst.aux.at("db_path"), (dir.path / "fixtures/demo.db").string());
    EXPECT_EQ(inst.aux.at("gold_sql"), "SELECT COUNT(*) FROM t");
}

TEST(GeneratePrompts, TemplateOverride) {
    TempDir dir;
    const std::string data = write_file(
        dir.file("sum.jsonl"), R"({"article": "AAA", "highlights": "BBB"})"
                               "\n");
    const std::string tmpl = write_file(dir.file("tmpl.txt"), "TLDR: {article}");
    const PromptSet p = generate_prompts(TaskKind::summarization, data, 1, 0, tmpl);
    EXPECT_EQ(p.instances[0].prompt, "TLDR: AAA");
    EXPECT_EQ(p.instances[0].references[0], "BBB");
}

TEST(GeneratePrompts, MmluRejectsWrongChoiceCount) {
    TempDir dir;
    const std::string path = write_file(
        dir.file("bad.jsonl"),
        R"({"question": "q", "choices": ["a", "b"], "answer": "A"})"
        "\n");
    EXPECT_THROW(generate_prompts(TaskKind::mmlu, path, 1, 0), TaskError);
}

}  // namespace

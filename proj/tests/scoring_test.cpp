#include <gtest/gtest.h>

#include <sqlite3.h>

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "llmbench/scoring.hpp"
#include "test_util.hpp"

using namespace llmbench;
using testutil::TempDir;

namespace {

std::vector<TaskInstance> one_instance(const std::string& id,
                                       std::vector<std::string> references,
                                       std::map<std::string, std::string> aux = {}) {
    TaskInstance inst;
    inst.id = id;
    inst.prompt = "p";
    inst.references = std::move(references);
    inst.aux = std::move(aux);
    return {inst};
}

// independent oracle: memoized recursive LCS, a different algorithm from the
// iterative DP inside the scorer
size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::pair<size_t, size_t>, size_t> memo;
    std::function<size_t(size_t, size_t)> rec = [&](size_t i, size_t j) -> size_t {
        if (i == a.size() || j == b.size()) return 0;
        const auto key = std::make_pair(i, j);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        size_t best;
        if (a[i] == b[j]) {
            best = 1 + rec(i + 1, j + 1);
        } else {
            best = std::max(rec(i + 1, j), rec(i, j + 1));
        }
        memo[key] = best;
        return best;
    };
    return rec(0, 0);
}

double rouge_oracle(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    if (hyp.empty() || ref.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_oracle(hyp, ref));
    const double p = lcs / hyp.size();
    const double r = lcs / ref.size();
    return (p + r == 0) ? 0.0 : 2 * p * r / (p + r);
}

// --- MMLU ---

TEST(ScoreMmlu, DirectExtraction) {
    const QualityScore s = score_mmlu({{"i", "The answer is B."}}, one_instance("i", {"B"}));
    EXPECT_DOUBLE_EQ(s.value, 1.0);
    EXPECT_EQ(s.metric_name, "accuracy");
}

TEST(ScoreMmlu, CaseInsensitive) {
    EXPECT_DOUBLE_EQ(score_mmlu({{"i", "b"}}, one_instance("i", {"B"})).value, 1.0);
}

TEST(ScoreMmlu, UnextractableScoresZero) {
    EXPECT_DOUBLE_EQ(score_mmlu({{"i", "I'm not sure"}}, one_instance("i", {"C"})).value, 0.0);
}

TEST(ScoreMmlu, WordBoundaryOnly) {
    // 'b' inside a word must not count; wrong standalone letter scores 0
    EXPECT_DOUBLE_EQ(score_mmlu({{"i", "maybe"}}, one_instance("i", {"B"})).value, 0.0);
    EXPECT_DOUBLE_EQ(score_mmlu({{"i", "It is (C)"}}, one_instance("i", {"C"})).value, 1.0);
    EXPECT_DOUBLE_EQ(score_mmlu({{"i", "A."}}, one_instance("i", {"D"})).value, 0.0);
}

TEST(ScoreMmlu, AggregateIsMean) {
    std::vector<TaskInstance> instances;
    for (int i = 0; i < 4; ++i) {
        TaskInstance inst;
        inst.id = "q" + std::to_string(i);
        inst.prompt = "p";
        inst.references = {"A"};
        instances.push_back(inst);
    }
    const OutputList outputs = {{"q0", "A"}, {"q1", "B"}, {"q2", "A"}, {"q3", "nope"}};
    const QualityScore s = score_mmlu(outputs, instances);
    EXPECT_DOUBLE_EQ(s.value, 0.5);
    ASSERT_EQ(s.per_instance.size(), 4u);
}

TEST(ScoreMmlu, UnknownIdThrows) {
    EXPECT_THROW(score_mmlu({{"nope", "A"}}, one_instance("i", {"A"})), std::invalid_argument);
}

// --- SQuAD F1 ---

TEST(ScoreQaF1, ExactMatch) {
    const QualityScore s =
        score_qa_f1({{"i", "Albert Einstein"}}, one_instance("i", {"Albert Einstein"}));
    EXPECT_DOUBLE_EQ(s.value, 1.0);
    EXPECT_EQ(s.metric_name, "f1");
}

TEST(ScoreQaF1, HandWorkedTwoThirds) {
    // pred "Einstein": precision 1, recall 1/2, F1 = 2/3
    const QualityScore s =
        score_qa_f1({{"i", "Einstein"}}, one_instance("i", {"Albert Einstein"}));
    EXPECT_NEAR(s.value, 2.0 / 3.0, 1e-12);
}

TEST(ScoreQaF1, BothEmptyIsOne) {
    EXPECT_DOUBLE_EQ(score_qa_f1({{"i", ""}}, one_instance("i", {})).value, 1.0);
    EXPECT_DOUBLE_EQ(score_qa_f1({{"i", ""}}, one_instance("i", {""})).value, 1.0);
}

TEST(ScoreQaF1, UnanswerableTokenMapsToEmpty) {
    EXPECT_DOUBLE_EQ(score_qa_f1({{"i", "unanswerable"}}, one_instance("i", {})).value, 1.0);
    EXPECT_DOUBLE_EQ(score_qa_f1({{"i", " Unanswerable "}}, one_instance("i", {})).value, 1.0);
    // abstaining when there IS an answer scores 0
    EXPECT_DOUBLE_EQ(score_qa_f1({{"i", "unanswerable"}}, one_instance("i", {"Paris"})).value, 0.0);
}

TEST(ScoreQaF1, NormalizationDropsArticlesAndPunctuation) {
    const QualityScore s =
        score_qa_f1({{"i", "the Eiffel Tower!"}}, one_instance("i", {"Eiffel Tower"}));
    EXPECT_DOUBLE_EQ(s.value, 1.0);
}

TEST(ScoreQaF1, MultiReferenceTakesMax) {
    const QualityScore s = score_qa_f1({{"i", "Einstein"}},
                                       one_instance("i", {"Albert Einstein", "Einstein"}));
    EXPECT_DOUBLE_EQ(s.value, 1.0);
}

TEST(ScoreQaF1, SingleTokenSymmetry) {
    // P and R swap when pred/gold swap; F1 is invariant
    std::mt19937 rng(11);
    const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta"};
    for (int trial = 0; trial < 50; ++trial) {
        const std::string a = words[rng() % words.size()];
        const std::string b = words[rng() % words.size()];
        const double ab = score_qa_f1({{"i", a}}, one_instance("i", {b})).value;
        const double ba = score_qa_f1({{"i", b}}, one_instance("i", {a})).value;
        EXPECT_DOUBLE_EQ(ab, ba);
    }
}

// --- ROUGE-L ---

TEST(ScoreRougeL, IdentityIsOne) {
    const QualityScore s =
        score_rouge_l({{"i", "the quick brown fox"}}, one_instance("i", {"the quick brown fox"}));
    EXPECT_DOUBLE_EQ(s.value, 1.0);
    EXPECT_EQ(s.metric_name, "rouge_l");
}

TEST(ScoreRougeL, SpecWorkedExample) {
    // LCS = 5, P = 1, R = 5/6, F = 10/11
    const QualityScore s = score_rouge_l({{"i", "the cat on the mat"}},
                                         one_instance("i", {"the cat sat on the mat"}));
    EXPECT_NEAR(s.value, 10.0 / 11.0, 1e-12);
}

TEST(ScoreRougeL, EmptyHypothesisIsZero) {
    EXPECT_DOUBLE_EQ(score_rouge_l({{"i", ""}}, one_instance("i", {"x y z"})).value, 0.0);
}

TEST(ScoreRougeL, AgreesWithLcsOracleOnRandomPairs) {
    std::mt19937 rng(1234);
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e"};
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t n1 = rng() % 13, n2 = rng() % 13;
        std::vector<std::string> hyp, ref;
        std::string hyp_text, ref_text;
        for (size_t i = 0; i < n1; ++i) {
            hyp.push_back(vocab[rng() % vocab.size()]);
            hyp_text += hyp.back() + " ";
        }
        for (size_t i = 0; i < n2; ++i) {
            ref.push_back(vocab[rng() % vocab.size()]);
            ref_text += ref.back() + " ";
        }
        const double got = score_rouge_l({{"i", hyp_text}}, one_instance("i", {ref_text})).value;
        EXPECT_DOUBLE_EQ(got, rouge_oracle(hyp, ref)) << "trial " << trial;
    }
}

// --- SQL extraction + execution ---

TEST(ExtractSql, FenceStripping) {
    EXPECT_EQ(extract_sql("```sql\nSELECT 1\n```"), "SELECT 1");
    EXPECT_EQ(extract_sql("```\nSELECT 2\n```"), "SELECT 2");
}

TEST(ExtractSql, KeywordScan) {
    EXPECT_EQ(extract_sql("Sure! SELECT name FROM t;"), "SELECT name FROM t;");
    EXPECT_EQ(extract_sql("answer:\nWITH x AS (SELECT 1) SELECT * FROM x"),
              "WITH x AS (SELECT 1) SELECT * FROM x");
}

TEST(ExtractSql, Passthrough) {
    EXPECT_EQ(extract_sql("  no query here "), "no query here");
}

class SqlFixture : public ::testing::Test {
protected:
    void SetUp() override {
        db_path_ = dir_.file("demo.db");
        sqlite3* db = nullptr;
        ASSERT_EQ(sqlite3_open(db_path_.c_str(), &db), SQLITE_OK);
        const char* ddl =
            "CREATE TABLE t(name TEXT, score INTEGER);"
            "INSERT INTO t VALUES('alice', 3), ('bob', 1), ('carol', 2);";
        ASSERT_EQ(sqlite3_exec(db, ddl, nullptr, nullptr, nullptr), SQLITE_OK);
        sqlite3_close(db);
    }

    std::vector<TaskInstance> instance_with(const std::string& gold) {
        return one_instance("i", {gold}, {{"db_path", db_path_}, {"gold_sql", gold}});
    }

    TempDir dir_;
    std::string db_path_;
};

TEST_F(SqlFixture, IdenticalQueryScoresOne) {
    const auto inst = instance_with("SELECT name FROM t ORDER BY score");
    const QualityScore s = score_sql_execution({{"i", "SELECT name FROM t ORDER BY score"}}, inst);
    EXPECT_DOUBLE_EQ(s.value, 1.0);
    EXPECT_EQ(s.metric_name, "execution_accuracy");
}

TEST_F(SqlFixture, OrderInsensitiveWithoutOrderBy) {
    const auto inst = instance_with("SELECT name FROM t");
    const QualityScore s =
        score_sql_execution({{"i", "SELECT name FROM t ORDER BY score DESC"}}, inst);
    EXPECT_DOUBLE_EQ(s.value, 1.0);
}

TEST_F(SqlFixture, OrderSensitiveWithGoldOrderBy) {
    const auto inst = instance_with("SELECT name FROM t ORDER BY score");
    const QualityScore s =
        score_sql_execution({{"i", "SELECT name FROM t ORDER BY score DESC"}}, inst);
    EXPECT_DOUBLE_EQ(s.value, 0.0);
}

TEST_F(SqlFixture, SyntaxErrorScoresZero) {
    const auto inst = instance_with("SELECT name FROM t");
    EXPECT_DOUBLE_EQ(score_sql_execution({{"i", "SELEC oops"}}, inst).value, 0.0);
}

TEST_F(SqlFixture, ProseWrappedQueryIsExtracted) {
    const auto inst = instance_with("SELECT COUNT(*) FROM t");
    const QualityScore s = score_sql_execution(
        {{"i", "Here you go:\n```sql\nSELECT COUNT(*) FROM t\n```\nhope that helps"}}, inst);
    EXPECT_DOUBLE_EQ(s.value, 1.0);
}

TEST_F(SqlFixture, WrongResultScoresZero) {
    const auto inst = instance_with("SELECT COUNT(*) FROM t");
    EXPECT_DOUBLE_EQ(
        score_sql_execution({{"i", "SELECT COUNT(*) FROM t WHERE score > 1"}}, inst).value, 0.0);
}

TEST_F(SqlFixture, SubqueryOrderByIsNotTopLevel) {
    const auto inst =
        instance_with("SELECT name FROM (SELECT name, score FROM t ORDER BY score)");
    // gold's ORDER BY is inside a subquery: multiset comparison applies
    const QualityScore s = score_sql_execution({{"i", "SELECT name FROM t"}}, inst);
    EXPECT_DOUBLE_EQ(s.value, 1.0);
}

TEST(ScoreSql, UnreadableDatabaseIsRunLevelError) {
    const auto inst = one_instance("i", {"SELECT 1"},
                                   {{"db_path", "/nonexistent/nope.db"}, {"gold_sql", "SELECT 1"}});
    EXPECT_THROW(score_sql_execution({{"i", "SELECT 1"}}, inst), TaskError);
}

// --- cross-metric properties ---

TEST(Scoring, AllScoresInUnitIntervalAndMeanExact) {
    std::mt19937 rng(99);
    std::vector<TaskInstance> instances;
    OutputList outputs;
    const std::vector<std::string> words = {"x", "y", "z", "w"};
    for (int i = 0; i < 40; ++i) {
        TaskInstance inst;
        inst.id = "r" + std::to_string(i);
        inst.prompt = "p";
        std::string ref;
        for (int k = 0; k < 5; ++k) ref += words[rng() % words.size()] + " ";
        inst.references = {ref};
        instances.push_back(inst);
        std::string hyp;
        for (int k = 0; k < 4; ++k) hyp += words[rng() % words.size()] + " ";
        outputs.emplace_back(inst.id, hyp);
    }
    for (const auto& score : {score_rouge_l(outputs, instances), score_qa_f1(outputs, instances)}) {
        double sum = 0;
        for (const auto& [id, v] : score.per_instance) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            sum += v;
        }
        EXPECT_DOUBLE_EQ(score.value, sum / score.per_instance.size());
    }
}

}  // namespace

#pragma once

// Task-specific quality scoring. Every score is in [0, 1] and the aggregate
// is the exact arithmetic mean of the per-instance values. Multi-reference
// scoring takes the max over references.

#include <algorithm>
#include <cctype>
#include <cstring>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <sqlite3.h>

#include "llmbench/task.hpp"

namespace llmbench {

using OutputList = std::vector<std::pair<std::string, std::string>>;  // (instance id, text)

namespace scoring_detail {

inline std::vector<std::string> whitespace_tokens(const std::string& s, bool lowercase) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(lowercase ? static_cast<char>(std::tolower(static_cast<unsigned char>(ch)))
                                    : ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// SQuAD normalization: lowercase, drop punctuation, drop articles a/an/the,
// collapse whitespace.
inline std::vector<std::string> squad_tokens(const std::string& s) {
    std::string cleaned;
    cleaned.reserve(s.size());
    for (char ch : s) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::ispunct(u)) continue;
        cleaned.push_back(static_cast<char>(std::tolower(u)));
    }
    std::vector<std::string> toks = whitespace_tokens(cleaned, false);
    std::vector<std::string> out;
    for (auto& t : toks) {
        if (t == "a" || t == "an" || t == "the") continue;
        out.push_back(std::move(t));
    }
    return out;
}

inline double token_f1(const std::vector<std::string>& pred,
                       const std::vector<std::string>& gold) {
    if (pred.empty() || gold.empty()) {
        return (pred.empty() && gold.empty()) ? 1.0 : 0.0;
    }
    std::map<std::string, int> counts;
    for (const auto& t : gold) counts[t]++;
    int common = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            it->second--;
            common++;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / pred.size();
    const double recall = static_cast<double>(common) / gold.size();
    return 2.0 * precision * recall / (precision + recall);
}

inline size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline double rouge_l_f1(const std::vector<std::string>& hyp,
                         const std::vector<std::string>& ref) {
    if (hyp.empty() || ref.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(hyp, ref));
    const double p = lcs / hyp.size();
    const double r = lcs / ref.size();
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

// First standalone A-D letter at a word boundary, case-insensitive.
inline char extract_choice_letter(const std::string& text) {
    auto is_word = [](unsigned char c) { return std::isalnum(c) != 0; };
    for (size_t i = 0; i < text.size(); ++i) {
        char up = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
        if (up < 'A' || up > 'D') continue;
        const bool left_ok = (i == 0) || !is_word(static_cast<unsigned char>(text[i - 1]));
        const bool right_ok =
            (i + 1 == text.size()) || !is_word(static_cast<unsigned char>(text[i + 1]));
        if (left_ok && right_ok) return up;
    }
    return '\0';
}

inline QualityScore finish(std::string name,
                           std::vector<std::pair<std::string, double>> per_instance) {
    QualityScore s;
    s.metric_name = std::move(name);
    s.per_instance = std::move(per_instance);
    double sum = 0.0;
    for (const auto& [id, v] : s.per_instance) sum += v;
    s.value = s.per_instance.empty() ? 0.0 : sum / s.per_instance.size();
    return s;
}

inline const TaskInstance& instance_by_id(const std::vector<TaskInstance>& instances,
                                          const std::string& id) {
    for (const auto& inst : instances) {
        if (inst.id == id) return inst;
    }
    throw std::invalid_argument("output id does not match any instance: " + id);
}

}  // namespace scoring_detail

inline QualityScore score_mmlu(const OutputList& outputs,
                               const std::vector<TaskInstance>& instances) {
    std::vector<std::pair<std::string, double>> per;
    for (const auto& [id, text] : outputs) {
        const TaskInstance& inst = scoring_detail::instance_by_id(instances, id);
        const char got = scoring_detail::extract_choice_letter(text);
        const char want = inst.references.empty() ? '\0' : inst.references.front()[0];
        per.emplace_back(id, (got != '\0' && got == want) ? 1.0 : 0.0);
    }
    return scoring_detail::finish("accuracy", per);
}

inline QualityScore score_qa_f1(const OutputList& outputs,
                                const std::vector<TaskInstance>& instances) {
    std::vector<std::pair<std::string, double>> per;
    for (const auto& [id, text] : outputs) {
        const TaskInstance& inst = scoring_detail::instance_by_id(instances, id);
        // the harness prompts unanswerable items to reply "unanswerable"
        std::string pred = text;
        {
            auto toks = scoring_detail::whitespace_tokens(text, true);
            if (toks.size() == 1 && toks[0] == "unanswerable") pred.clear();
        }
        const auto pred_toks = scoring_detail::squad_tokens(pred);
        std::vector<std::string> refs = inst.references;
        if (refs.empty()) refs.push_back("");  // unanswerable gold
        double best = 0.0;
        for (const auto& ref : refs) {
            best = std::max(best,
                            scoring_detail::token_f1(pred_toks, scoring_detail::squad_tokens(ref)));
        }
        per.emplace_back(id, best);
    }
    return scoring_detail::finish("f1", per);
}

inline QualityScore score_rouge_l(const OutputList& outputs,
                                  const std::vector<TaskInstance>& instances) {
    std::vector<std::pair<std::string, double>> per;
    for (const auto& [id, text] : outputs) {
        const TaskInstance& inst = scoring_detail::instance_by_id(instances, id);
        const auto hyp = scoring_detail::whitespace_tokens(text, true);
        double best = 0.0;
        for (const auto& ref : inst.references) {
            best = std::max(
                best, scoring_detail::rouge_l_f1(hyp, scoring_detail::whitespace_tokens(ref, true)));
        }
        per.emplace_back(id, best);
    }
    return scoring_detail::finish("rouge_l", per);
}

// First fenced code block, else first statement starting with a SQL keyword
// (cut at the first semicolon, inclusive), else the raw text trimmed.
inline std::string extract_sql(const std::string& text) {
    auto trim = [](std::string s) {
        const char* ws = " \t\r\n";
        const size_t b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        const size_t e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
    };

    size_t fence = text.find("```");
    if (fence != std::string::npos) {
        size_t body = text.find('\n', fence + 3);
        if (body == std::string::npos) body = fence + 3;  // ``` on same line as code
        else body += 1;
        const size_t close = text.find("```", body);
        if (close != std::string::npos) return trim(text.substr(body, close - body));
    }

    static const char* keywords[] = {"SELECT", "WITH", "INSERT", "UPDATE", "DELETE"};
    auto upper = text;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    size_t best = std::string::npos;
    for (const char* kw : keywords) {
        size_t pos = 0;
        const size_t n = std::strlen(kw);
        while ((pos = upper.find(kw, pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(upper[pos - 1]));
            const bool right_ok = pos + n >= upper.size() ||
                                  !std::isalnum(static_cast<unsigned char>(upper[pos + n]));
            if (left_ok && right_ok) {
                best = std::min(best, pos);
                break;
            }
            pos += n;
        }
    }
    if (best != std::string::npos) {
        size_t end = text.find(';', best);
        end = (end == std::string::npos) ? text.size() : end + 1;
        return trim(text.substr(best, end - best));
    }
    return trim(text);
}

namespace scoring_detail {

struct SqliteDb {
    sqlite3* db = nullptr;
    explicit SqliteDb(const std::string& path) {
        if (sqlite3_open_v2(path.c_str(), &db, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
            std::string msg = db ? sqlite3_errmsg(db) : "out of memory";
            if (db) sqlite3_close(db);
            db = nullptr;
            throw TaskError("database unreadable: " + path + " (" + msg + ")");
        }
    }
    SqliteDb(const SqliteDb&) = delete;
    SqliteDb& operator=(const SqliteDb&) = delete;
    ~SqliteDb() {
        if (db) sqlite3_close(db);
    }
};

using ResultRows = std::vector<std::vector<std::string>>;

inline bool run_query(sqlite3* db, const std::string& sql, ResultRows& rows) {
    sqlite3_stmt* stmt = nullptr;
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) return false;
    std::unique_ptr<sqlite3_stmt, decltype(&sqlite3_finalize)> guard(stmt, sqlite3_finalize);
    int rc;
    while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
        std::vector<std::string> row;
        const int cols = sqlite3_column_count(stmt);
        for (int i = 0; i < cols; ++i) {
            if (sqlite3_column_type(stmt, i) == SQLITE_NULL) {
                row.emplace_back("\x01NULL");
            } else {
                const unsigned char* v = sqlite3_column_text(stmt, i);
                row.emplace_back(v ? reinterpret_cast<const char*>(v) : "");
            }
        }
        rows.push_back(std::move(row));
    }
    return rc == SQLITE_DONE;
}

// Top-level ORDER BY (outside parentheses and string literals) makes the
// gold result order-sensitive.
inline bool has_top_level_order_by(const std::string& sql) {
    int depth = 0;
    char quote = '\0';
    for (size_t i = 0; i + 7 < sql.size() + 1 && i < sql.size(); ++i) {
        const char c = sql[i];
        if (quote) {
            if (c == quote) quote = '\0';
            continue;
        }
        if (c == '\'' || c == '"') {
            quote = c;
        } else if (c == '(') {
            depth++;
        } else if (c == ')') {
            depth--;
        } else if (depth == 0 && (c == 'o' || c == 'O') && i + 7 < sql.size()) {
            std::string word = sql.substr(i, 8);
            std::transform(word.begin(), word.end(), word.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
            // collapse the separator to handle "ORDER  BY" and "order\nby"
            if (word.rfind("ORDER", 0) == 0) {
                size_t j = i + 5;
                while (j < sql.size() && std::isspace(static_cast<unsigned char>(sql[j]))) j++;
                std::string next = sql.substr(j, 2);
                std::transform(next.begin(), next.end(), next.begin(), [](unsigned char ch) {
                    return static_cast<char>(std::toupper(ch));
                });
                const bool left_ok =
                    i == 0 || !std::isalnum(static_cast<unsigned char>(sql[i - 1]));
                if (left_ok && next == "BY") return true;
            }
        }
    }
    return false;
}

}  // namespace scoring_detail

// Execution accuracy: 1 iff the predicted SQL runs and its result multiset
// equals the gold query's (order-sensitive only when the gold query has a
// top-level ORDER BY).
inline QualityScore score_sql_execution(const OutputList& outputs,
                                        const std::vector<TaskInstance>& instances) {
    std::vector<std::pair<std::string, double>> per;
    for (const auto& [id, text] : outputs) {
        const TaskInstance& inst = scoring_detail::instance_by_id(instances, id);
        const auto db_it = inst.aux.find("db_path");
        const auto gold_it = inst.aux.find("gold_sql");
        if (db_it == inst.aux.end() || gold_it == inst.aux.end()) {
            throw TaskError("instance " + id + " is missing db_path/gold_sql aux fields");
        }
        scoring_detail::SqliteDb db(db_it->second);  // throws if unreadable

        scoring_detail::ResultRows gold_rows;
        if (!scoring_detail::run_query(db.db, gold_it->second, gold_rows)) {
            throw TaskError("gold SQL failed for instance " + id + ": " +
                            sqlite3_errmsg(db.db));
        }

        scoring_detail::ResultRows pred_rows;
        const std::string pred_sql = extract_sql(text);
        double score = 0.0;
        if (scoring_detail::run_query(db.db, pred_sql, pred_rows)) {
            if (!scoring_detail::has_top_level_order_by(gold_it->second)) {
                std::sort(gold_rows.begin(), gold_rows.end());
                std::sort(pred_rows.begin(), pred_rows.end());
            }
            score = (gold_rows == pred_rows) ? 1.0 : 0.0;
        }
        per.emplace_back(id, score);
    }
    return scoring_detail::finish("execution_accuracy", per);
}

// Dispatch on the configured task.
inline std::vector<QualityScore> score_task(TaskKind task, const OutputList& outputs,
                                            const std::vector<TaskInstance>& instances) {
    switch (task) {
        case TaskKind::mmlu: return {score_mmlu(outputs, instances)};
        case TaskKind::qa: return {score_qa_f1(outputs, instances)};
        case TaskKind::summarization: return {score_rouge_l(outputs, instances)};
        case TaskKind::sql: return {score_sql_execution(outputs, instances)};
        case TaskKind::custom: return {};  // no built-in metric
    }
    return {};
}

}  // namespace llmbench

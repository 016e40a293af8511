#pragma once

// Task plugin layer: turn line-delimited dataset records into rendered
// prompts plus reference answers. Subsampling is seeded-shuffle-then-take,
// so a (file, samples, seed) triple always yields the same instances.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmbench/config.hpp"
#include "llmbench/rng.hpp"

namespace llmbench {

struct TaskError : std::runtime_error {
    explicit TaskError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TaskInstance {
    std::string id;
    std::string prompt;                       // fully rendered
    std::vector<std::string> references;      // gold answers; empty = unanswerable
    std::map<std::string, std::string> aux;   // e.g. db_path, gold_sql
};

struct QualityScore {
    std::string metric_name;
    double value = 0.0;  // arithmetic mean of per_instance values
    std::vector<std::pair<std::string, double>> per_instance;
};

struct PromptSet {
    std::vector<TaskInstance> instances;
    std::vector<std::string> warnings;
};

namespace task_detail {

inline const char* default_template(TaskKind task) {
    switch (task) {
        case TaskKind::mmlu:
            return "The following is a multiple choice question. Reply with a single letter "
                   "(A, B, C, or D) and nothing else.\n\n"
                   "Question: {question}\n{choices}\nAnswer:";
        case TaskKind::qa:
            return "Answer the question using only the given context. Reply with the shortest "
                   "answer span. If the question cannot be answered from the context, reply "
                   "with exactly \"unanswerable\".\n\n"
                   "Context: {context}\nQuestion: {question}\nAnswer:";
        case TaskKind::summarization:
            return "Summarize the following article in a few sentences.\n\n"
                   "Article: {article}\n\nSummary:";
        case TaskKind::sql:
            return "Write a single SQLite query that answers the question. "
                   "Output only the SQL.\n\n{schema}Question: {question}\nSQL:";
        case TaskKind::custom:
            return "{prompt}";
    }
    return "{prompt}";
}

inline std::string render(std::string tmpl,
                          const std::map<std::string, std::string>& values) {
    for (const auto& [key, value] : values) {
        const std::string token = "{" + key + "}";
        size_t pos = 0;
        while ((pos = tmpl.find(token, pos)) != std::string::npos) {
            tmpl.replace(pos, token.size(), value);
            pos += value.size();
        }
    }
    return tmpl;
}

inline std::string require_string(const nlohmann::json& rec, const char* field, size_t line) {
    if (!rec.contains(field) || !rec[field].is_string()) {
        throw TaskError("malformed record at line " + std::to_string(line) +
                        ": missing string field '" + field + "'");
    }
    return rec[field].get<std::string>();
}

}  // namespace task_detail

// dataset record schemas (one JSON object per line):
//   mmlu:          {question, choices: [4 strings], answer: "A".."D"}
//   qa:            {question, context, answers: [strings]}  (empty => unanswerable)
//   summarization: {article, highlights}
//   sql:           {question, db_path, gold_sql}  (+optional schema)
//   custom:        {prompt, references?: [strings], id?}
inline PromptSet generate_prompts(TaskKind task, const std::string& dataset_path,
                                  uint32_t samples, uint64_t seed,
                                  const std::string& template_path = "") {
    namespace fs = std::filesystem;
    std::ifstream in(dataset_path);
    if (!in) throw TaskError("dataset file not found: " + dataset_path);

    std::string tmpl = task_detail::default_template(task);
    if (!template_path.empty()) {
        std::ifstream tf(template_path);
        if (!tf) throw TaskError("template file not found: " + template_path);
        std::stringstream ss;
        ss << tf.rdbuf();
        tmpl = ss.str();
    }

    const fs::path dataset_dir = fs::path(dataset_path).parent_path();
    const std::string prefix = to_string(task);

    struct RawRecord {
        nlohmann::json json;
        size_t line;
    };
    std::vector<RawRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw TaskError("malformed record at line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        if (!rec.is_object()) {
            throw TaskError("malformed record at line " + std::to_string(line_no) +
                            ": expected a JSON object");
        }
        records.push_back({std::move(rec), line_no});
    }
    if (records.empty()) throw TaskError("empty dataset: " + dataset_path);

    PromptSet out;
    if (records.size() < samples) {
        out.warnings.push_back("dataset has only " + std::to_string(records.size()) +
                               " records; requested samples=" + std::to_string(samples));
    }

    std::vector<size_t> order(records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const size_t take = std::min<size_t>(samples, order.size());

    for (size_t k = 0; k < take; ++k) {
        const RawRecord& raw = records[order[k]];
        const nlohmann::json& rec = raw.json;
        TaskInstance inst;

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "-%06zu", raw.line);
        inst.id = prefix + idbuf;

        std::map<std::string, std::string> vars;
        switch (task) {
            case TaskKind::mmlu: {
                vars["question"] = task_detail::require_string(rec, "question", raw.line);
                if (!rec.contains("choices") || !rec["choices"].is_array() ||
                    rec["choices"].size() != 4) {
                    throw TaskError("malformed record at line " + std::to_string(raw.line) +
                                    ": mmlu record needs choices with exactly 4 entries");
                }
                static const char* letters[] = {"A", "B", "C", "D"};
                std::string joined;
                for (size_t i = 0; i < 4; ++i) {
                    if (!rec["choices"][i].is_string()) {
                        throw TaskError("malformed record at line " + std::to_string(raw.line) +
                                        ": choices must be strings");
                    }
                    const std::string choice = rec["choices"][i].get<std::string>();
                    vars[std::string("choice_") + static_cast<char>('a' + i)] = choice;
                    joined += std::string(letters[i]) + ". " + choice;
                    if (i != 3) joined += "\n";
                }
                vars["choices"] = joined;
                std::string answer = task_detail::require_string(rec, "answer", raw.line);
                if (answer.size() != 1 || std::toupper(answer[0]) < 'A' ||
                    std::toupper(answer[0]) > 'D') {
                    throw TaskError("malformed record at line " + std::to_string(raw.line) +
                                    ": answer must be a letter A-D");
                }
                inst.references = {std::string(1, static_cast<char>(std::toupper(answer[0])))};
                break;
            }
            case TaskKind::qa: {
                vars["question"] = task_detail::require_string(rec, "question", raw.line);
                vars["context"] = task_detail::require_string(rec, "context", raw.line);
                if (!rec.contains("answers") || !rec["answers"].is_array()) {
                    throw TaskError("malformed record at line " + std::to_string(raw.line) +
                                    ": qa record needs an answers array");
                }
                for (const auto& a : rec["answers"]) {
                    inst.references.push_back(a.get<std::string>());
                }
                break;
            }
            case TaskKind::summarization: {
                vars["article"] = task_detail::require_string(rec, "article", raw.line);
                inst.references = {task_detail::require_string(rec, "highlights", raw.line)};
                break;
            }
            case TaskKind::sql: {
                vars["question"] = task_detail::require_string(rec, "question", raw.line);
                std::string db = task_detail::require_string(rec, "db_path", raw.line);
                if (!db.empty() && db[0] != '/') db = (dataset_dir / db).string();
                const std::string gold = task_detail::require_string(rec, "gold_sql", raw.line);
                vars["schema"] = rec.contains("schema") && rec["schema"].is_string()
                                     ? "Schema:\n" + rec["schema"].get<std::string>() + "\n\n"
                                     : "";
                inst.aux["db_path"] = db;
                inst.aux["gold_sql"] = gold;
                inst.references = {gold};
                break;
            }
            case TaskKind::custom: {
                vars["prompt"] = task_detail::require_string(rec, "prompt", raw.line);
                if (rec.contains("references") && rec["references"].is_array()) {
                    for (const auto& r : rec["references"]) {
                        inst.references.push_back(r.get<std::string>());
                    }
                }
                if (rec.contains("id") && rec["id"].is_string()) {
                    inst.id = rec["id"].get<std::string>();
                }
                break;
            }
        }

        inst.prompt = task_detail::render(tmpl, vars);
        if (inst.prompt.empty()) {
            throw TaskError("malformed record at line " + std::to_string(raw.line) +
                            ": rendered prompt is empty");
        }
        out.instances.push_back(std::move(inst));
    }
    return out;
}

}  // namespace llmbench

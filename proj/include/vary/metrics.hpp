#pragma once

#include <map>
#include <string>
#include <vector>

#include "vary/common.hpp"

namespace vary {

struct ParseScore {
    double ned = 0.0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Levenshtein over Unicode scalar values. The project charset has no
// decomposable sequences, so normalization is the identity here.
long levenshtein(const std::string& a, const std::string& b);

// Levenshtein / max(len), both empty -> 0; result in [0,1].
double normalized_edit_distance(const std::string& pred, const std::string& ref);

// whitespace-tokenized multiset precision/recall/F1; both empty -> (1,1,1)
ParseScore token_prf(const std::string& pred, const std::string& ref);

// max over refs of (1 - NED) if NED < tau else 0, after lowercase + trim
double anls(const std::string& pred, const std::vector<std::string>& refs, double tau = 0.5);

// numeric pair -> |pred-ref| <= eps*|ref| (ref 0 -> exact); otherwise
// case-insensitive exact match
bool relaxed_accuracy(const std::string& pred, const std::string& ref, double eps = 0.05);

struct EvalRow {
    std::string id;
    std::string task;
    double ned = 0.0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    double anls = 0.0;
    bool relaxed_ok = false;
};

struct TaskAggregate {
    int count = 0;
    double mean_ned = 0.0, mean_f1 = 0.0, mean_precision = 0.0, mean_recall = 0.0;
    double mean_anls = 0.0, relaxed_acc = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    TaskAggregate overall;
    std::map<std::string, TaskAggregate> per_task;

    std::string to_json() const;
    std::string to_text() const;  // aligned columns, one line per task + overall
};

EvalReport aggregate(std::vector<EvalRow> rows);

// score one prediction against one reference with every metric
EvalRow score_row(const std::string& id, const std::string& task, const std::string& pred,
                  const std::string& ref);

}  // namespace vary

#include "vary/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "vary/tokenizer.hpp"

namespace vary {

long levenshtein(const std::string& a, const std::string& b) {
    const std::vector<uint32_t> xs = decode_utf8(a);
    const std::vector<uint32_t> ys = decode_utf8(b);
    const size_t n = xs.size(), m = ys.size();
    if (n == 0) return static_cast<long>(m);
    if (m == 0) return static_cast<long>(n);
    std::vector<long> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<long>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<long>(i);
        for (size_t j = 1; j <= m; ++j) {
            const long sub = prev[j - 1] + (xs[i - 1] == ys[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double normalized_edit_distance(const std::string& pred, const std::string& ref) {
    const size_t lp = decode_utf8(pred).size();
    const size_t lr = decode_utf8(ref).size();
    const size_t longest = std::max(lp, lr);
    if (longest == 0) return 0.0;
    return static_cast<double>(levenshtein(pred, ref)) / static_cast<double>(longest);
}

namespace {

std::vector<std::string> whitespace_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

std::string lower_trim(const std::string& s) {
    size_t b = 0, e = s.size();
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out = s.substr(b, e - b);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool parse_number(const std::string& s, double& out) {
    const std::string t = lower_trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

}  // namespace

ParseScore token_prf(const std::string& pred, const std::string& ref) {
    const auto ps = whitespace_tokens(pred);
    const auto rs = whitespace_tokens(ref);
    ParseScore score;
    if (ps.empty() && rs.empty()) {
        score.precision = score.recall = score.f1 = 1.0;
        return score;
    }
    if (ps.empty() || rs.empty()) return score;  // all zeros
    std::unordered_map<std::string, int> ref_counts;
    for (const auto& w : rs) ++ref_counts[w];
    long hits = 0;
    for (const auto& w : ps) {
        auto it = ref_counts.find(w);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++hits;
        }
    }
    score.precision = static_cast<double>(hits) / static_cast<double>(ps.size());
    score.recall = static_cast<double>(hits) / static_cast<double>(rs.size());
    score.f1 = (score.precision > 0.0 && score.recall > 0.0)
                   ? 2.0 * score.precision * score.recall / (score.precision + score.recall)
                   : 0.0;
    return score;
}

double anls(const std::string& pred, const std::vector<std::string>& refs, double tau) {
    if (refs.empty()) throw InputError("anls: reference list is empty");
    const std::string p = lower_trim(pred);
    double best = 0.0;
    for (const auto& ref : refs) {
        const double ned = normalized_edit_distance(p, lower_trim(ref));
        const double s = ned < tau ? 1.0 - ned : 0.0;
        best = std::max(best, s);
    }
    return best;
}

bool relaxed_accuracy(const std::string& pred, const std::string& ref, double eps) {
    double pv = 0.0, rv = 0.0;
    if (parse_number(pred, pv) && parse_number(ref, rv)) {
        if (rv == 0.0) return pv == 0.0;
        return std::fabs(pv - rv) <= eps * std::fabs(rv);
    }
    return lower_trim(pred) == lower_trim(ref);
}

EvalRow score_row(const std::string& id, const std::string& task, const std::string& pred,
                  const std::string& ref) {
    EvalRow row;
    row.id = id;
    row.task = task;
    row.ned = normalized_edit_distance(pred, ref);
    const ParseScore prf = token_prf(pred, ref);
    row.precision = prf.precision;
    row.recall = prf.recall;
    row.f1 = prf.f1;
    row.anls = anls(pred, {ref});
    row.relaxed_ok = relaxed_accuracy(pred, ref);
    return row;
}

namespace {

TaskAggregate aggregate_rows(const std::vector<const EvalRow*>& rows) {
    TaskAggregate agg;
    agg.count = static_cast<int>(rows.size());
    if (rows.empty()) return agg;
    for (const EvalRow* r : rows) {
        agg.mean_ned += r->ned;
        agg.mean_f1 += r->f1;
        agg.mean_precision += r->precision;
        agg.mean_recall += r->recall;
        agg.mean_anls += r->anls;
        agg.relaxed_acc += r->relaxed_ok ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(rows.size());
    agg.mean_ned /= n;
    agg.mean_f1 /= n;
    agg.mean_precision /= n;
    agg.mean_recall /= n;
    agg.mean_anls /= n;
    agg.relaxed_acc /= n;
    return agg;
}

}  // namespace

EvalReport aggregate(std::vector<EvalRow> rows) {
    EvalReport rep;
    rep.rows = std::move(rows);
    std::vector<const EvalRow*> all;
    std::map<std::string, std::vector<const EvalRow*>> by_task;
    for (const EvalRow& r : rep.rows) {
        all.push_back(&r);
        by_task[r.task].push_back(&r);
    }
    rep.overall = aggregate_rows(all);
    for (const auto& [task, trs] : by_task) rep.per_task[task] = aggregate_rows(trs);
    return rep;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    auto agg_json = [](const TaskAggregate& a) {
        return nlohmann::json{{"count", a.count},
                              {"mean_ned", a.mean_ned},
                              {"mean_f1", a.mean_f1},
                              {"mean_precision", a.mean_precision},
                              {"mean_recall", a.mean_recall},
                              {"mean_anls", a.mean_anls},
                              {"relaxed_accuracy", a.relaxed_acc}};
    };
    j["overall"] = agg_json(overall);
    for (const auto& [task, a] : per_task) j["per_task"][task] = agg_json(a);
    j["rows"] = nlohmann::json::array();
    for (const EvalRow& r : rows) {
        j["rows"].push_back({{"id", r.id},
                             {"task", r.task},
                             {"ned", r.ned},
                             {"precision", r.precision},
                             {"recall", r.recall},
                             {"f1", r.f1},
                             {"anls", r.anls},
                             {"relaxed_ok", r.relaxed_ok}});
    }
    return j.dump(2);
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(14) << "task" << std::right << std::setw(7) << "count"
       << std::setw(10) << "NED" << std::setw(10) << "F1" << std::setw(10) << "Prec"
       << std::setw(10) << "Recall" << std::setw(10) << "ANLS" << std::setw(10) << "Relaxed"
       << "\n";
    auto line = [&](const std::string& name, const TaskAggregate& a) {
        os << std::left << std::setw(14) << name << std::right << std::setw(7) << a.count
           << std::fixed << std::setprecision(4) << std::setw(10) << a.mean_ned << std::setw(10)
           << a.mean_f1 << std::setw(10) << a.mean_precision << std::setw(10) << a.mean_recall
           << std::setw(10) << a.mean_anls << std::setw(10) << a.relaxed_acc << "\n";
    };
    for (const auto& [task, a] : per_task) line(task, a);
    line("overall", overall);
    return os.str();
}

}  // namespace vary

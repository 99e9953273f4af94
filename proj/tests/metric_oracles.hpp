#pragma once

// Independent metric oracles for the test suites. These deliberately avoid
// the implementation path: Levenshtein is a top-down memoized recursion over
// decoded codepoints, F1 counts with sorted vectors, numbers parse through
// istream extraction.

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vary/rng.hpp"
#include "vary/tokenizer.hpp"

namespace vary::oracle {

inline long lev_rec(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b, size_t i,
                    size_t j, std::map<std::pair<size_t, size_t>, long>& memo) {
    if (i == a.size()) return static_cast<long>(b.size() - j);
    if (j == b.size()) return static_cast<long>(a.size() - i);
    const auto key = std::make_pair(i, j);
    const auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    long best;
    if (a[i] == b[j]) {
        best = lev_rec(a, b, i + 1, j + 1, memo);
    } else {
        const long del = lev_rec(a, b, i + 1, j, memo);
        const long ins = lev_rec(a, b, i, j + 1, memo);
        const long sub = lev_rec(a, b, i + 1, j + 1, memo);
        best = 1 + std::min({del, ins, sub});
    }
    memo[key] = best;
    return best;
}

inline long levenshtein(const std::string& a, const std::string& b) {
    const auto xs = decode_utf8(a);
    const auto ys = decode_utf8(b);
    std::map<std::pair<size_t, size_t>, long> memo;
    return lev_rec(xs, ys, 0, 0, memo);
}

inline double ned(const std::string& a, const std::string& b) {
    const size_t la = decode_utf8(a).size(), lb = decode_utf8(b).size();
    const size_t longest = std::max(la, lb);
    return longest == 0 ? 0.0 : static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

struct Prf {
    double p = 0.0, r = 0.0, f1 = 0.0;
};

inline Prf prf(const std::string& pred, const std::string& ref) {
    auto words = [](const std::string& s) {
        std::vector<std::string> out;
        std::istringstream is(s);
        std::string w;
        while (is >> w) out.push_back(w);
        std::sort(out.begin(), out.end());
        return out;
    };
    const auto ps = words(pred);
    const auto rs = words(ref);
    if (ps.empty() && rs.empty()) return {1.0, 1.0, 1.0};
    if (ps.empty() || rs.empty()) return {};
    std::vector<std::string> common;
    std::set_intersection(ps.begin(), ps.end(), rs.begin(), rs.end(), std::back_inserter(common));
    const double hits = static_cast<double>(common.size());
    Prf out;
    out.p = hits / static_cast<double>(ps.size());
    out.r = hits / static_cast<double>(rs.size());
    out.f1 = (out.p > 0 && out.r > 0) ? 2 * out.p * out.r / (out.p + out.r) : 0.0;
    return out;
}

inline std::string lower_trim(std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline double anls(const std::string& pred, const std::vector<std::string>& refs, double tau) {
    double best = 0.0;
    for (const auto& r : refs) {
        const double d = ned(lower_trim(pred), lower_trim(r));
        best = std::max(best, d < tau ? 1.0 - d : 0.0);
    }
    return best;
}

inline bool relaxed(const std::string& pred, const std::string& ref, double eps) {
    auto parse = [](const std::string& s, double& out) {
        std::istringstream is(oracle::lower_trim(s));
        if (!(is >> out)) return false;
        std::string leftover;
        return !(is >> leftover);
    };
    double pv = 0.0, rv = 0.0;
    if (parse(pred, pv) && parse(ref, rv)) {
        if (rv == 0.0) return pv == 0.0;
        return std::abs(pv - rv) <= eps * std::abs(rv);
    }
    return lower_trim(pred) == lower_trim(ref);
}

// random strings over a small alphabet, with occasional spaces and digits
inline std::string random_text(Rng& rng, int max_len, bool spaces = true) {
    const std::string alphabet = spaces ? "abcd 019" : "abcd019";
    std::string out;
    const int len = static_cast<int>(rng.below(static_cast<uint64_t>(max_len + 1)));
    for (int i = 0; i < len; ++i) out += alphabet[rng.below(alphabet.size())];
    return out;
}

}  // namespace vary::oracle

#include "compgen/concept_space.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "compgen/error.hpp"

namespace compgen {

void ConceptSpec::validate() const {
    if (cardinality_c1 < 1 || cardinality_c2 < 1) {
        fail(ErrorCode::InvalidParameter, "concept cardinalities must be >= 1");
    }
    std::set<std::string> names;
    for (const auto& dim : nuisance_dims) {
        if (dim.cardinality < 1) {
            fail(ErrorCode::InvalidParameter, "nuisance '" + dim.name + "' has cardinality < 1");
        }
        if (!names.insert(dim.name).second) {
            fail(ErrorCode::InvalidParameter, "duplicate nuisance name '" + dim.name + "'");
        }
    }
}

long long ConceptSpec::nuisance_variations() const {
    long long total = 1;
    for (const auto& dim : nuisance_dims) total *= dim.cardinality;
    return total;
}

bool NkSplit::is_train(Combo c) const {
    if (c.c1 < 0 || c.c1 >= n || c.c2 < 0 || c.c2 >= n) return false;
    return ((c.c2 - c.c1) % n + n) % n < k;
}

std::vector<Combo> NkSplit::all_combos() const {
    std::vector<Combo> out;
    out.reserve(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out.push_back({i, j});
    return out;
}

NkSplit build_nk_split(int n, int k) {
    if (n < 1) fail(ErrorCode::InvalidParameter, "n must be >= 1");
    if (k < 1 || k > n) {
        fail(ErrorCode::InvalidParameter,
             "k must lie in [1, n], got k=" + std::to_string(k) + " n=" + std::to_string(n));
    }
    NkSplit split;
    split.n = n;
    split.k = k;
    split.train_combos.reserve(static_cast<std::size_t>(n) * k);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < k; ++s) split.train_combos.push_back({i, (i + s) % n});
    split.test_combos.reserve(static_cast<std::size_t>(n) * (n - k));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (!split.is_train({i, j})) split.test_combos.push_back({i, j});
    return split;
}

std::vector<int> select_value_indices(int total_values, int n) {
    if (total_values < 1 || n < 1) fail(ErrorCode::InvalidParameter, "total_values and n must be >= 1");
    if (n > total_values) {
        fail(ErrorCode::InvalidParameter,
             "cannot select " + std::to_string(n) + " values out of " + std::to_string(total_values));
    }
    const int stride = total_values / n;
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i * stride;
    return out;
}

void to_json(nlohmann::json& j, const Combo& c) { j = nlohmann::json::array({c.c1, c.c2}); }

void from_json(const nlohmann::json& j, Combo& c) {
    if (!j.is_array() || j.size() != 2) fail(ErrorCode::InvalidInput, "combo must be a [i, j] pair");
    c.c1 = j.at(0).get<int>();
    c.c2 = j.at(1).get<int>();
}

void to_json(nlohmann::json& j, const NkSplit& s) {
    j = nlohmann::json{{"n", s.n}, {"k", s.k}, {"train", s.train_combos}, {"test", s.test_combos}};
}

void from_json(const nlohmann::json& j, NkSplit& s) {
    s.n = j.at("n").get<int>();
    s.k = j.at("k").get<int>();
    s.train_combos = j.at("train").get<std::vector<Combo>>();
    s.test_combos = j.at("test").get<std::vector<Combo>>();
}

void to_json(nlohmann::json& j, const ConceptSpec& s) {
    nlohmann::json nuisance = nlohmann::json::array();
    for (const auto& d : s.nuisance_dims) nuisance.push_back({{"name", d.name}, {"cardinality", d.cardinality}});
    j = nlohmann::json{{"name", s.name},
                       {"cardinality_c1", s.cardinality_c1},
                       {"cardinality_c2", s.cardinality_c2},
                       {"nuisance", nuisance}};
}

void from_json(const nlohmann::json& j, ConceptSpec& s) {
    s.name = j.value("name", std::string{});
    s.cardinality_c1 = j.at("cardinality_c1").get<int>();
    s.cardinality_c2 = j.at("cardinality_c2").get<int>();
    s.nuisance_dims.clear();
    if (j.contains("nuisance")) {
        for (const auto& d : j.at("nuisance")) {
            s.nuisance_dims.push_back({d.at("name").get<std::string>(), d.at("cardinality").get<int>()});
        }
    }
}

}  // namespace compgen

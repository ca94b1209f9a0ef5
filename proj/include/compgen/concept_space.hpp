#pragma once

#include <compare>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace compgen {

/// A labeled (first-concept value, second-concept value) pair, 0-based.
struct Combo {
    int c1 = 0;
    int c2 = 0;

    friend auto operator<=>(const Combo&, const Combo&) = default;
};

struct NuisanceDim {
    std::string name;
    int cardinality = 1;

    friend bool operator==(const NuisanceDim&, const NuisanceDim&) = default;
};

/// Two labeled concepts plus any number of unlabeled (nuisance) concepts.
struct ConceptSpec {
    std::string name;
    int cardinality_c1 = 1;
    int cardinality_c2 = 1;
    std::vector<NuisanceDim> nuisance_dims;

    /// Throws invalid-parameter on non-positive cardinalities or duplicate names.
    void validate() const;

    /// Product of all nuisance cardinalities (1 when there are none).
    long long nuisance_variations() const;

    friend bool operator==(const ConceptSpec&, const ConceptSpec&) = default;
};

/// Partition of the n x n grid into observed and unseen combinations.
struct NkSplit {
    int n = 0;
    int k = 0;
    std::vector<Combo> train_combos;
    std::vector<Combo> test_combos;

    bool is_train(Combo c) const;
    /// Every cell of the grid in row-major order.
    std::vector<Combo> all_combos() const;

    friend bool operator==(const NkSplit&, const NkSplit&) = default;
};

/// Cyclic split: value i is observed with (i + s) mod n for s in [0, k).
/// Train pairs are emitted by row, then by shift; test pairs in row-major order.
NkSplit build_nk_split(int n, int k);

/// n maximally spread value indices out of total_values: i * floor(total / n).
std::vector<int> select_value_indices(int total_values, int n);

void to_json(nlohmann::json& j, const Combo& c);
void from_json(const nlohmann::json& j, Combo& c);
void to_json(nlohmann::json& j, const NkSplit& s);
void from_json(const nlohmann::json& j, NkSplit& s);
void to_json(nlohmann::json& j, const ConceptSpec& s);
void from_json(const nlohmann::json& j, ConceptSpec& s);

}  // namespace compgen

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "compgen/embedding_table.hpp"
#include "compgen/synth_data.hpp"
#include "compgen/trainer.hpp"

namespace compgen {

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);
void to_json(nlohmann::json& j, const ExtractorConfig& c);
void from_json(const nlohmann::json& j, ExtractorConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const EpochRecord& r);
void from_json(const nlohmann::json& j, EpochRecord& r);

std::string to_string(Selection selection);
Selection parse_selection(const std::string& name);

}  // namespace compgen

namespace compgen::io {

namespace fs = std::filesystem;

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::uint32_t kCembVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary embedding matrix: "CEMB", u32 version, u32 rows, u32 cols, then
/// rows * cols f32 values in row-major order, all little-endian.
void write_cemb(const fs::path& path, const MatrixF& matrix);
MatrixF read_cemb(const fs::path& path);

/// One matrix row per line, comma separated, printed with enough digits to
/// round-trip every f32 exactly. No header.
void write_matrix_csv(const fs::path& path, const MatrixF& matrix);
MatrixF read_matrix_csv(const fs::path& path);

/// Picks the reader by extension: ".csv" is text, anything else is CEMB.
MatrixF read_matrix(const fs::path& path);

struct LabelRows {
    std::vector<int> c1;
    std::vector<int> c2;
    std::vector<std::string> extra_names;  // columns after c1,c2
    std::vector<std::vector<int>> extra;   // per row
};

/// Header "index,c1,c2[,extra...]"; index must run 0, 1, 2, ... in order.
void write_labels_csv(const fs::path& path, const std::vector<int>& c1, const std::vector<int>& c2,
                      const std::vector<std::string>& extra_names = {},
                      const std::vector<std::vector<int>>& extra = {});
LabelRows read_labels_csv(const fs::path& path);

/// Reads a matrix and its labels into a validated table. n = 0 infers the
/// number of values per concept from the largest label. Throws
/// row-count-mismatch when the files disagree and nan-entry on non-finite values.
EmbeddingTable ingest_embeddings(const fs::path& matrix_path, const fs::path& labels_path, int n = 0);

/// Writes table.matrix as CEMB (f32) plus its labels.
void export_embeddings(const EmbeddingTable& table, const fs::path& matrix_path, const fs::path& labels_path);

/// "CGWT", u32 version, u32 array count, then per array a u64 element count and
/// that many f32 values, in the network's parameter order.
void write_checkpoint(const fs::path& path, const nn::TwoHeadNet<float>& net);

/// Loads weights into a network whose shape is already set; every array length
/// must match.
void read_checkpoint(const fs::path& path, nn::TwoHeadNet<float>& net);

/// A trained model as <prefix>.cgwt plus a JSON description <prefix>.json.
void save_model(const fs::path& prefix, const TrainedModel& model);
TrainedModel load_model(const fs::path& prefix);

/// A dataset directory: data.f32 (CEMB, one row per image), labels.csv with
/// the nuisance assignment as extra columns, and dataset.json for provenance.
void save_dataset(const fs::path& dir, const LabeledImageSet& set);
LabeledImageSet load_dataset(const fs::path& dir);

}  // namespace compgen::io

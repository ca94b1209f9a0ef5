#include "compgen/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "compgen/error.hpp"

namespace compgen {

using nlohmann::json;

std::string to_string(Selection selection) { return selection == Selection::Oracle ? "oracle" : "last"; }

Selection parse_selection(const std::string& name) {
    if (name == "oracle") return Selection::Oracle;
    if (name == "last") return Selection::Last;
    fail(ErrorCode::InvalidParameter, "unknown selection '" + name + "'");
}

void to_json(json& j, const DatasetSpec& s) {
    j = json{{"family", to_string(s.family)},
             {"image_size", s.image_size},
             {"concept_spec", s.concept_spec},
             {"n_cell", s.n_cell},
             {"seed", s.seed}};
}

void from_json(const json& j, DatasetSpec& s) {
    s.family = parse_family(j.at("family").get<std::string>());
    s.image_size = j.at("image_size").get<int>();
    s.concept_spec = j.at("concept_spec").get<ConceptSpec>();
    s.n_cell = j.at("n_cell").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(json& j, const ExtractorConfig& c) {
    j = json{{"hidden_sizes", c.hidden_sizes}, {"feature_dim", c.feature_dim}, {"init_seed", c.init_seed}};
}

void from_json(const json& j, ExtractorConfig& c) {
    c.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"learning_rate", c.learning_rate},
             {"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"selection", to_string(c.selection)},
             {"shuffle_seed", c.shuffle_seed}};
}

void from_json(const json& j, TrainConfig& c) {
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.selection = parse_selection(j.at("selection").get<std::string>());
    c.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
}

void to_json(json& j, const EpochRecord& r) {
    j = json{{"epoch", r.epoch}, {"id_accuracy", r.id_accuracy}, {"ood_accuracy", r.ood_accuracy}, {"loss", r.loss}};
}

void from_json(const json& j, EpochRecord& r) {
    r.epoch = j.at("epoch").get<int>();
    r.id_accuracy = j.at("id_accuracy").get<double>();
    r.ood_accuracy = j.at("ood_accuracy").get<double>();
    r.loss = j.at("loss").get<double>();
}

}  // namespace compgen

namespace compgen::io {

namespace {

constexpr std::array<char, 4> kCembMagic{'C', 'E', 'M', 'B'};
constexpr std::array<char, 4> kCheckpointMagic{'C', 'G', 'W', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

/// Bounds-checked little-endian reader over a file's bytes.
class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    void need(std::size_t count) const {
        if (bytes_.size() - pos_ < count) fail(ErrorCode::CorruptFile, what_ + " is truncated");
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * b);
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * b);
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    bool magic(const std::array<char, 4>& expected) {
        need(4);
        const bool ok = std::equal(expected.begin(), expected.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_));
        pos_ += 4;
        return ok;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    while (first < last && *first == ' ') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) fail(ErrorCode::CorruptFile, "cannot parse '" + text + "' in " + where);
    return value;
}

std::string format_float(float v) {
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), ptr);
}

}  // namespace

void write_cemb(const fs::path& path, const MatrixF& matrix) {
    if (matrix.rows() > UINT32_MAX || matrix.cols() > UINT32_MAX) {
        fail(ErrorCode::InvalidParameter, "matrix too large for the CEMB format");
    }
    std::string out;
    out.reserve(16 + 4 * static_cast<std::size_t>(matrix.size()));
    out.append(kCembMagic.data(), kCembMagic.size());
    put_u32(out, kCembVersion);
    put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
    put_u32(out, static_cast<std::uint32_t>(matrix.cols()));
    for (Eigen::Index r = 0; r < matrix.rows(); ++r)
        for (Eigen::Index c = 0; c < matrix.cols(); ++c) put_f32(out, matrix(r, c));
    write_file(path, out);
}

MatrixF read_cemb(const fs::path& path) {
    const std::string bytes = read_file(path);
    ByteReader in(bytes, "'" + path.string() + "'");
    if (!in.magic(kCembMagic)) fail(ErrorCode::BadMagic, "'" + path.string() + "' is not a CEMB file");
    const std::uint32_t version = in.u32();
    if (version != kCembVersion) {
        fail(ErrorCode::BadVersion, "unsupported CEMB version " + std::to_string(version));
    }
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    const std::uint64_t values = static_cast<std::uint64_t>(rows) * cols;
    if (in.remaining() != 4 * values) {
        fail(ErrorCode::CorruptFile, "'" + path.string() + "' holds " + std::to_string(in.remaining()) +
                                         " payload bytes, header promises " + std::to_string(4 * values));
    }
    MatrixF m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = in.f32();
    return m;
}

void write_matrix_csv(const fs::path& path, const MatrixF& matrix) {
    std::string out;
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
            if (c > 0) out.push_back(',');
            out += format_float(matrix(r, c));
        }
        out.push_back('\n');
    }
    write_file(path, out);
}

MatrixF read_matrix_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<float>> rows;
    std::string line;
    while (std::getline(in, line)) {
        line = strip_cr(line);
        if (line.empty()) continue;
        std::vector<float> row;
        for (const auto& field : split_line(line)) {
            const std::string where = "'" + path.string() + "' row " + std::to_string(rows.size());
            // from_chars rejects "nan"/"inf" spelled differently, so handle them explicitly
            if (field == "nan" || field == "NaN" || field == "-nan") {
                row.push_back(std::numeric_limits<float>::quiet_NaN());
            } else {
                row.push_back(parse_number<float>(field, where));
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            fail(ErrorCode::CorruptFile, "ragged rows in '" + path.string() + "'");
        }
        rows.push_back(std::move(row));
    }
    const auto cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
    MatrixF m(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    return m;
}

MatrixF read_matrix(const fs::path& path) {
    return path.extension() == ".csv" ? read_matrix_csv(path) : read_cemb(path);
}

void write_labels_csv(const fs::path& path, const std::vector<int>& c1, const std::vector<int>& c2,
                      const std::vector<std::string>& extra_names, const std::vector<std::vector<int>>& extra) {
    if (c1.size() != c2.size() || (!extra_names.empty() && extra.size() != c1.size())) {
        fail(ErrorCode::InvalidInput, "label columns have different lengths");
    }
    std::string out = "index,c1,c2";
    for (const auto& name : extra_names) out += "," + name;
    out.push_back('\n');
    for (std::size_t r = 0; r < c1.size(); ++r) {
        out += std::to_string(r) + "," + std::to_string(c1[r]) + "," + std::to_string(c2[r]);
        if (!extra_names.empty()) {
            if (extra[r].size() != extra_names.size()) fail(ErrorCode::InvalidInput, "extra label width mismatch");
            for (int v : extra[r]) out += "," + std::to_string(v);
        }
        out.push_back('\n');
    }
    write_file(path, out);
}

LabelRows read_labels_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::CorruptFile, "'" + path.string() + "' is empty");
    const auto header = split_line(strip_cr(line));
    if (header.size() < 3 || header[0] != "index" || header[1] != "c1" || header[2] != "c2") {
        fail(ErrorCode::CorruptFile, "'" + path.string() + "' must start with the header index,c1,c2");
    }
    LabelRows rows;
    rows.extra_names.assign(header.begin() + 3, header.end());
    while (std::getline(in, line)) {
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_line(line);
        const std::string where = "'" + path.string() + "' line " + std::to_string(rows.c1.size() + 2);
        if (fields.size() != header.size()) fail(ErrorCode::CorruptFile, "wrong column count in " + where);
        const auto index = parse_number<long long>(fields[0], where);
        if (index != static_cast<long long>(rows.c1.size())) {
            fail(ErrorCode::CorruptFile, "indices must be 0-based, contiguous and sorted (" + where + ")");
        }
        rows.c1.push_back(parse_number<int>(fields[1], where));
        rows.c2.push_back(parse_number<int>(fields[2], where));
        std::vector<int> extra;
        for (std::size_t f = 3; f < fields.size(); ++f) extra.push_back(parse_number<int>(fields[f], where));
        rows.extra.push_back(std::move(extra));
    }
    return rows;
}

EmbeddingTable ingest_embeddings(const fs::path& matrix_path, const fs::path& labels_path, int n) {
    const MatrixF m = read_matrix(matrix_path);
    const LabelRows labels = read_labels_csv(labels_path);
    if (static_cast<std::size_t>(m.rows()) != labels.c1.size()) {
        fail(ErrorCode::RowCountMismatch, "matrix has " + std::to_string(m.rows()) + " rows, labels have " +
                                              std::to_string(labels.c1.size()));
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!std::isfinite(m(r, c))) {
                fail(ErrorCode::NanEntry, "non-finite value at row " + std::to_string(r) + ", column " +
                                              std::to_string(c));
            }
        }
    }
    EmbeddingTable table;
    table.matrix = m.cast<double>();
    table.labels_c1 = labels.c1;
    table.labels_c2 = labels.c2;
    if (n <= 0) {
        int top = -1;
        for (std::size_t r = 0; r < labels.c1.size(); ++r) top = std::max({top, labels.c1[r], labels.c2[r]});
        n = top + 1;
    }
    table.n = n;
    table.validate();
    return table;
}

void export_embeddings(const EmbeddingTable& table, const fs::path& matrix_path, const fs::path& labels_path) {
    table.validate();
    const MatrixF m = table.matrix.cast<float>();
    if (matrix_path.extension() == ".csv") {
        write_matrix_csv(matrix_path, m);
    } else {
        write_cemb(matrix_path, m);
    }
    write_labels_csv(labels_path, table.labels_c1, table.labels_c2);
}

void write_checkpoint(const fs::path& path, const nn::TwoHeadNet<float>& net) {
    std::string out;
    out.append(kCheckpointMagic.data(), kCheckpointMagic.size());
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(net.params().size()));
    for (const auto& p : net.params()) {
        put_u64(out, static_cast<std::uint64_t>(p.size()));
        // column-major element order, the storage order of the tensors
        for (Eigen::Index i = 0; i < p.size(); ++i) put_f32(out, p.data()[i]);
    }
    write_file(path, out);
}

void read_checkpoint(const fs::path& path, nn::TwoHeadNet<float>& net) {
    const std::string bytes = read_file(path);
    ByteReader in(bytes, "'" + path.string() + "'");
    if (!in.magic(kCheckpointMagic)) fail(ErrorCode::BadMagic, "'" + path.string() + "' is not a checkpoint");
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        fail(ErrorCode::BadVersion, "unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = in.u32();
    if (count != net.params().size()) {
        fail(ErrorCode::CorruptFile, "checkpoint holds " + std::to_string(count) + " arrays, network expects " +
                                         std::to_string(net.params().size()));
    }
    for (auto& p : net.params()) {
        const std::uint64_t len = in.u64();
        if (len != static_cast<std::uint64_t>(p.size())) fail(ErrorCode::CorruptFile, "checkpoint array length mismatch");
        in.need(4 * len);
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = in.f32();
    }
    if (in.remaining() != 0) fail(ErrorCode::CorruptFile, "trailing bytes after checkpoint arrays");
}

void save_model(const fs::path& prefix, const TrainedModel& model) {
    const fs::path weights = fs::path(prefix.string() + ".cgwt");
    write_checkpoint(weights, model.net);
    json j{{"extractor", model.extractor},
           {"train", model.train_config},
           {"n", model.n},
           {"input_dim", model.input_dim},
           {"best_epoch", model.best_epoch},
           {"history", model.history},
           {"weights", weights.filename().string()}};
    write_file(fs::path(prefix.string() + ".json"), j.dump(2) + "\n");
}

TrainedModel load_model(const fs::path& prefix) {
    json j;
    try {
        j = json::parse(read_file(fs::path(prefix.string() + ".json")));
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptFile, std::string("model description: ") + e.what());
    }
    TrainedModel model;
    try {
        model.extractor = j.at("extractor").get<ExtractorConfig>();
        model.train_config = j.at("train").get<TrainConfig>();
        model.n = j.at("n").get<int>();
        model.input_dim = j.at("input_dim").get<int>();
        model.best_epoch = j.at("best_epoch").get<int>();
        model.history = j.at("history").get<std::vector<EpochRecord>>();
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptFile, std::string("model description: ") + e.what());
    }
    model.net = nn::TwoHeadNet<float>(model.input_dim, model.extractor.trunk_sizes(), model.n, model.n);
    read_checkpoint(prefix.parent_path() / j.value("weights", prefix.filename().string() + ".cgwt"), model.net);
    return model;
}

void save_dataset(const fs::path& dir, const LabeledImageSet& set) {
    fs::create_directories(dir);
    const auto ppi = static_cast<Eigen::Index>(set.pixels_per_image());
    const auto count = static_cast<Eigen::Index>(set.size());
    const MatrixF data = Eigen::Map<const MatrixF>(set.pixels.data(), count, ppi);
    write_cemb(dir / "data.f32", data);

    std::vector<std::string> names;
    for (const auto& dim : set.spec.concept_spec.nuisance_dims) names.push_back(dim.name);
    std::vector<std::vector<int>> extra;
    extra.reserve(set.size());
    for (std::size_t r = 0; r < set.size(); ++r) {
        const auto nu = set.nuisance_of(r);
        extra.emplace_back(nu.begin(), nu.end());
    }
    write_labels_csv(dir / "labels.csv", set.labels_c1, set.labels_c2, names, extra);

    json j{{"spec", set.spec},
           {"n", set.n},
           {"combos", set.combos},
           {"tag", to_string(set.tag)},
           {"channels", set.channels},
           {"image_size", set.image_size}};
    write_file(dir / "dataset.json", j.dump(2) + "\n");
}

LabeledImageSet load_dataset(const fs::path& dir) {
    json j;
    try {
        j = json::parse(read_file(dir / "dataset.json"));
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptFile, std::string("dataset description: ") + e.what());
    }
    LabeledImageSet set;
    try {
        set.spec = j.at("spec").get<DatasetSpec>();
        set.n = j.at("n").get<int>();
        set.combos = j.at("combos").get<std::vector<Combo>>();
        const auto tag = j.at("tag").get<std::string>();
        set.tag = tag == "train" ? SplitTag::Train : tag == "test" ? SplitTag::Test
                  : tag == "probe" ? SplitTag::Probe : SplitTag::Heldout;
        set.channels = j.at("channels").get<int>();
        set.image_size = j.at("image_size").get<int>();
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptFile, std::string("dataset description: ") + e.what());
    }
    const MatrixF data = read_cemb(dir / "data.f32");
    const LabelRows labels = read_labels_csv(dir / "labels.csv");
    if (static_cast<std::size_t>(data.rows()) != labels.c1.size()) {
        fail(ErrorCode::RowCountMismatch, "dataset pixels and labels disagree");
    }
    if (data.cols() != set.pixels_per_image()) fail(ErrorCode::CorruptFile, "dataset image size mismatch");
    set.pixels.assign(data.data(), data.data() + data.size());
    set.labels_c1 = labels.c1;
    set.labels_c2 = labels.c2;
    for (const auto& row : labels.extra) set.nuisance.insert(set.nuisance.end(), row.begin(), row.end());
    return set;
}

}  // namespace compgen::io

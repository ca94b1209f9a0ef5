#include "compgen/synth_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "compgen/error.hpp"
#include "compgen/rng.hpp"

namespace compgen {

namespace {

constexpr std::uint64_t kShapeStream = 0x5348415045ULL;  // "SHAPE"
constexpr double kGlyphRadius = 0.28;                    // fraction of image side at scale 1
constexpr std::array<const char*, 4> kKnownNuisance = {"position", "rotation", "scale", "background"};

struct Placement {
    double angle_deg = 0.0;
    double scale = 1.0;
    double dx = 0.0;  // pixels
    double dy = 0.0;
    float background = 0.0F;
};

std::array<float, 3> hue_to_rgb(double hue) {
    // HSV with full saturation and value.
    const double h6 = hue * 6.0;
    const int sector = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const auto q = static_cast<float>(1.0 - f);
    const auto t = static_cast<float>(f);
    switch (sector) {
        case 0: return {1.0F, t, 0.0F};
        case 1: return {q, 1.0F, 0.0F};
        case 2: return {0.0F, 1.0F, t};
        case 3: return {0.0F, q, 1.0F};
        case 4: return {t, 0.0F, 1.0F};
        default: return {1.0F, 0.0F, q};
    }
}

Placement resolve_placement(const DatasetSpec& spec, std::span<const int> nuisance) {
    const auto& dims = spec.concept_spec.nuisance_dims;
    Placement p;
    int position = -1;
    int position_card = 1;
    for (std::size_t d = 0; d < dims.size(); ++d) {
        const int v = nuisance[d];
        const int card = dims[d].cardinality;
        if (v < 0 || v >= card) fail(ErrorCode::IndexOutOfRange, "nuisance '" + dims[d].name + "' out of range");
        if (dims[d].name == "rotation") {
            p.angle_deg = 360.0 * v / card;
        } else if (dims[d].name == "scale") {
            p.scale = card > 1 ? 0.6 + 0.4 * v / (card - 1) : 1.0;
        } else if (dims[d].name == "background") {
            p.background = card > 1 ? static_cast<float>(0.3 * v / (card - 1)) : 0.0F;
        } else if (dims[d].name == "position") {
            position = v;
            position_card = card;
        }
    }
    if (position >= 0 && position_card > 1) {
        const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(position_card))));
        const int rows = (position_card + cols - 1) / cols;
        const double travel = std::max(0.0, 0.5 * spec.image_size - kGlyphRadius * spec.image_size - 1.0);
        const int col = position % cols;
        const int row = position / cols;
        p.dx = cols > 1 ? (2.0 * col / (cols - 1) - 1.0) * travel : 0.0;
        p.dy = rows > 1 ? (2.0 * row / (rows - 1) - 1.0) * travel : 0.0;
    }
    return p;
}

// Evenly spaced gray palette; the darkest level stays clear of a black background.
float gray_level(int value, int cardinality) {
    if (cardinality < 2) return 1.0F;
    return static_cast<float>(0.25 + 0.75 * value / (cardinality - 1));
}

bool inside(const std::vector<std::pair<double, double>>& poly, double x, double y) {
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto [xi, yi] = poly[i];
        const auto [xj, yj] = poly[j];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) in = !in;
    }
    return in;
}

}  // namespace

std::string to_string(DatasetFamily family) {
    return family == DatasetFamily::SpriteGlyph ? "sprite_glyph" : "colored_glyph";
}

DatasetFamily parse_family(const std::string& name) {
    if (name == "sprite_glyph") return DatasetFamily::SpriteGlyph;
    if (name == "colored_glyph") return DatasetFamily::ColoredGlyph;
    fail(ErrorCode::InvalidParameter, "unknown dataset family '" + name + "'");
}

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::Train: return "train";
        case SplitTag::Test: return "test";
        case SplitTag::Probe: return "probe";
        case SplitTag::Heldout: return "heldout";
    }
    return "unknown";
}

void DatasetSpec::validate() const {
    concept_spec.validate();
    if (image_size < 8) fail(ErrorCode::InvalidParameter, "image_size must be >= 8");
    if (n_cell < 1) fail(ErrorCode::InvalidParameter, "n_cell must be >= 1");
    for (const auto& dim : concept_spec.nuisance_dims) {
        if (std::find(kKnownNuisance.begin(), kKnownNuisance.end(), dim.name) == kKnownNuisance.end()) {
            fail(ErrorCode::InvalidParameter, "unknown nuisance dimension '" + dim.name + "'");
        }
    }
}

std::vector<std::pair<double, double>> glyph_polygon(int shape_value) {
    Rng rng(derive_seed(kShapeStream, {static_cast<std::uint64_t>(shape_value)}));
    const int vertices = 5 + static_cast<int>(rng.below(11));  // 5..15
    const double step = 2.0 * std::numbers::pi / vertices;
    std::vector<std::pair<double, double>> poly;
    poly.reserve(static_cast<std::size_t>(vertices));
    double max_r = 0.0;
    for (int v = 0; v < vertices; ++v) {
        const double angle = v * step + rng.uniform(-0.4, 0.4) * step;
        const double radius = rng.uniform(0.35, 1.0);
        max_r = std::max(max_r, radius);
        poly.emplace_back(radius * std::cos(angle), radius * std::sin(angle));
    }
    for (auto& [x, y] : poly) {
        x /= max_r;
        y /= max_r;
    }
    return poly;
}

std::vector<float> render_glyph(const DatasetSpec& spec, int shape_value, int second_value,
                                std::span<const int> nuisance) {
    const auto& cs = spec.concept_spec;
    if (shape_value < 0 || shape_value >= cs.cardinality_c1 || second_value < 0 ||
        second_value >= cs.cardinality_c2) {
        fail(ErrorCode::IndexOutOfRange, "glyph concept value out of range");
    }
    if (nuisance.size() != cs.nuisance_dims.size()) {
        fail(ErrorCode::InvalidInput, "nuisance assignment does not match the concept spec");
    }
    Placement place = resolve_placement(spec, nuisance);
    std::array<float, 3> color{};
    if (spec.family == DatasetFamily::ColoredGlyph) {
        color = hue_to_rgb(static_cast<double>(second_value) / cs.cardinality_c2);
    } else {
        color.fill(gray_level(second_value, cs.cardinality_c2));
    }

    const auto poly = glyph_polygon(shape_value);
    const int size = spec.image_size;
    const int channels = spec.channels();
    const double radius = kGlyphRadius * size * place.scale;
    const double theta = place.angle_deg * std::numbers::pi / 180.0;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double cx = 0.5 * size + place.dx;
    const double cy = 0.5 * size + place.dy;

    const auto plane = static_cast<std::size_t>(size) * size;
    std::vector<float> out(plane * channels, place.background);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double px = (x + 0.5 - cx) / radius;
            const double py = (y + 0.5 - cy) / radius;
            // inverse rotation into glyph space
            const double gx = cos_t * px + sin_t * py;
            const double gy = -sin_t * px + cos_t * py;
            if (!inside(poly, gx, gy)) continue;
            const auto idx = static_cast<std::size_t>(y) * size + x;
            for (int c = 0; c < channels; ++c) out[c * plane + idx] = color[static_cast<std::size_t>(c)];
        }
    }
    return out;
}

LabeledImageSet generate(const DatasetSpec& spec, std::span<const Combo> combos, int n, SplitTag tag) {
    spec.validate();
    const auto& cs = spec.concept_spec;
    if (combos.empty()) fail(ErrorCode::InvalidParameter, "no combinations to generate");
    if (n < 1 || n > cs.cardinality_c1 || n > cs.cardinality_c2) {
        fail(ErrorCode::InvalidParameter, "n exceeds a concept cardinality");
    }
    for (const auto& c : combos) {
        if (c.c1 < 0 || c.c2 < 0 || c.c1 >= n || c.c2 >= n) {
            fail(ErrorCode::InvalidParameter,
                 "combo (" + std::to_string(c.c1) + "," + std::to_string(c.c2) + ") outside the selected values");
        }
    }
    const auto values1 = select_value_indices(cs.cardinality_c1, n);
    const auto values2 = select_value_indices(cs.cardinality_c2, n);

    LabeledImageSet set;
    set.channels = spec.channels();
    set.image_size = spec.image_size;
    set.spec = spec;
    set.n = n;
    set.combos.assign(combos.begin(), combos.end());
    set.tag = tag;

    const std::size_t total = combos.size() * static_cast<std::size_t>(spec.n_cell);
    const auto ppi = static_cast<std::size_t>(spec.pixels_per_image());
    const std::size_t dims = cs.nuisance_dims.size();
    const long long variations = cs.nuisance_variations();
    set.pixels.resize(total * ppi);
    set.labels_c1.resize(total);
    set.labels_c2.resize(total);
    set.nuisance.resize(total * dims);

    // Each cell owns its own stream, so cells can be generated in any order.
    std::size_t row = 0;
    std::vector<long long> order;
    std::vector<int> assignment(dims);
    for (const auto& c : combos) {
        Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(tag), static_cast<std::uint64_t>(c.c1),
                                        static_cast<std::uint64_t>(c.c2)}));
        for (int s = 0; s < spec.n_cell; ++s, ++row) {
            const auto within = static_cast<long long>(s) % variations;
            if (within == 0) {
                order.resize(static_cast<std::size_t>(variations));
                for (long long v = 0; v < variations; ++v) order[static_cast<std::size_t>(v)] = v;
                rng.shuffle(order);
            }
            long long code = order[static_cast<std::size_t>(within)];
            for (std::size_t d = dims; d-- > 0;) {
                const int card = cs.nuisance_dims[d].cardinality;
                assignment[d] = static_cast<int>(code % card);
                code /= card;
            }
            const auto img = render_glyph(spec, values1[static_cast<std::size_t>(c.c1)],
                                          values2[static_cast<std::size_t>(c.c2)], assignment);
            std::copy(img.begin(), img.end(), set.pixels.begin() + static_cast<std::ptrdiff_t>(row * ppi));
            set.labels_c1[row] = c.c1;
            set.labels_c2[row] = c.c2;
            std::copy(assignment.begin(), assignment.end(),
                      set.nuisance.begin() + static_cast<std::ptrdiff_t>(row * dims));
        }
    }
    return set;
}

LabeledImageSet generate(const DatasetSpec& spec, const NkSplit& split, SplitTag tag) {
    switch (tag) {
        case SplitTag::Train: return generate(spec, split.train_combos, split.n, tag);
        case SplitTag::Test: return generate(spec, split.test_combos, split.n, tag);
        default: {
            const auto all = split.all_combos();
            return generate(spec, all, split.n, tag);
        }
    }
}

}  // namespace compgen

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "compgen/concept_space.hpp"

namespace compgen {

/// sprite_glyph: grayscale, concepts are (shape, gray level).
/// colored_glyph: RGB, concepts are (shape, hue).
enum class DatasetFamily { SpriteGlyph, ColoredGlyph };

std::string to_string(DatasetFamily family);
DatasetFamily parse_family(const std::string& name);

enum class SplitTag : std::uint8_t { Train, Test, Probe, Heldout };

std::string to_string(SplitTag tag);

/// Recognized nuisance names: position, rotation, scale, background.
struct DatasetSpec {
    DatasetFamily family = DatasetFamily::ColoredGlyph;
    int image_size = 32;
    ConceptSpec concept_spec;
    int n_cell = 1;
    std::uint64_t seed = 0;

    void validate() const;
    int channels() const { return family == DatasetFamily::ColoredGlyph ? 3 : 1; }
    int pixels_per_image() const { return channels() * image_size * image_size; }
};

struct LabeledImageSet {
    int channels = 0;
    int image_size = 0;
    /// Sample-major, each image stored channel-major (C x H x W), values in [0, 1].
    std::vector<float> pixels;
    std::vector<int> labels_c1;
    std::vector<int> labels_c2;
    /// Row-major (sample x nuisance dim), in concept_spec.nuisance_dims order.
    std::vector<int> nuisance;

    // provenance
    DatasetSpec spec;
    int n = 0;
    std::vector<Combo> combos;
    SplitTag tag = SplitTag::Train;

    std::size_t size() const { return labels_c1.size(); }
    int pixels_per_image() const { return channels * image_size * image_size; }
    std::span<const float> image(std::size_t i) const {
        const auto stride = static_cast<std::size_t>(pixels_per_image());
        return {pixels.data() + i * stride, stride};
    }
    std::span<const int> nuisance_of(std::size_t i) const {
        const auto dims = spec.concept_spec.nuisance_dims.size();
        return {nuisance.data() + i * dims, dims};
    }
};

/// Rasterizes one glyph. shape_value / second_value index the full concept
/// value ranges (cardinality_c1 / cardinality_c2), nuisance follows
/// spec.concept_spec.nuisance_dims. The polygon for a shape value depends only
/// on that value, never on the dataset seed.
std::vector<float> render_glyph(const DatasetSpec& spec, int shape_value, int second_value,
                                std::span<const int> nuisance);

/// Polygon vertices (unit radius, centered) traced for a shape value.
std::vector<std::pair<double, double>> glyph_polygon(int shape_value);

/// Generates n_cell samples for each combo. Combo indices address the n values
/// picked by select_value_indices from each concept. Nuisance variations are
/// drawn per cell without replacement (cycling when n_cell exceeds the number
/// of variations), so n_cell equal to the variation count gives full coverage.
LabeledImageSet generate(const DatasetSpec& spec, std::span<const Combo> combos, int n, SplitTag tag);

/// Convenience: the train or test side of a split.
LabeledImageSet generate(const DatasetSpec& spec, const NkSplit& split, SplitTag tag);

}  // namespace compgen

#pragma once

#include "terrembed/raster.hpp"
#include "terrembed/rng.hpp"

#include <utility>

namespace terrembed::augment {

struct ValueRange {
    double min = 0.0;
    double max = 0.0;
};

/// Stochastic view parameters. "Colour" distortion on a single elevation
/// channel is a gain/gamma/offset jitter of heights.
struct AugmentSpec {
    ValueRange zoom_scale{0.6, 1.0};  // crop side as a fraction of tile side
    double horizontal_flip_prob = 0.5;
    double vertical_flip_prob = 0.5;
    ValueRange gain{0.8, 1.2};
    ValueRange offset{-0.5, 0.5};  // meters
    ValueRange gamma{0.8, 1.25};
    ValueRange blur_sigma{0.1, 2.0};  // cells
    double blur_prob = 0.5;

    /// Spec that leaves every tile unchanged.
    static AugmentSpec identity();

    void validate() const;
};

/// The parameters drawn for one view, in draw order.
struct ViewDraw {
    double scale = 1.0;
    std::int64_t crop_row = 0;
    std::int64_t crop_col = 0;
    bool flip_horizontal = false;
    bool flip_vertical = false;
    double gain = 1.0;
    double gamma = 1.0;
    double offset = 0.0;
    bool blur = false;
    double sigma = 0.0;
};

/// Consumes exactly ten draws from rng, whatever their outcomes:
/// scale, crop row, crop col, h-flip, v-flip, gain, gamma, offset, blur gate, sigma.
ViewDraw draw_view(const AugmentSpec& spec, std::uint32_t side, Rng& rng);

/// crop+zoom -> flips -> value distortion -> blur.
raster::Tile apply_view(const raster::Tile& tile, const ViewDraw& draw);

raster::Tile augment(const raster::Tile& tile, const AugmentSpec& spec, Rng& rng);

/// Two views; the first view's draws precede the second's.
std::pair<raster::Tile, raster::Tile> make_pair(const raster::Tile& tile, const AugmentSpec& spec, Rng& rng);

// Building blocks, exposed for tests.
raster::Tile crop_and_resize(const raster::Tile& tile, std::size_t crop_side, std::size_t row0, std::size_t col0);
raster::Tile flip_horizontal(const raster::Tile& tile);
raster::Tile flip_vertical(const raster::Tile& tile);
raster::Tile distort_values(const raster::Tile& tile, double gain, double gamma, double offset);
raster::Tile gaussian_blur(const raster::Tile& tile, double sigma);

}  // namespace terrembed::augment

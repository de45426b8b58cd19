#include "terrembed/augment.hpp"

#include "terrembed/error.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace terrembed::augment {

AugmentSpec AugmentSpec::identity() {
    AugmentSpec s;
    s.zoom_scale = {1.0, 1.0};
    s.horizontal_flip_prob = 0.0;
    s.vertical_flip_prob = 0.0;
    s.gain = {1.0, 1.0};
    s.offset = {0.0, 0.0};
    s.gamma = {1.0, 1.0};
    s.blur_sigma = {0.0, 0.0};
    s.blur_prob = 0.0;
    return s;
}

namespace {
void check_prob(double p, std::string_view what) {
    require(p >= 0.0 && p <= 1.0, ErrorKind::configuration, fmt::format("augment: {} must lie in [0, 1], got {}", what, p));
}
void check_order(const ValueRange& r, std::string_view what) {
    require(r.min <= r.max, ErrorKind::configuration, fmt::format("augment: {} range has min > max", what));
}
}  // namespace

void AugmentSpec::validate() const {
    check_order(zoom_scale, "zoom scale");
    require(zoom_scale.min > 0.0 && zoom_scale.max <= 1.0, ErrorKind::configuration,
            "augment: zoom scale must satisfy 0 < min <= max <= 1");
    check_prob(horizontal_flip_prob, "horizontal flip probability");
    check_prob(vertical_flip_prob, "vertical flip probability");
    check_prob(blur_prob, "blur probability");
    check_order(gain, "gain");
    check_order(gamma, "gamma");
    check_order(offset, "offset");
    check_order(blur_sigma, "blur sigma");
    require(gain.min > 0.0, ErrorKind::configuration, "augment: gain must be positive");
    require(gamma.min > 0.0, ErrorKind::configuration, "augment: gamma must be positive");
    require(blur_sigma.min >= 0.0, ErrorKind::configuration, "augment: blur sigma must be non-negative");
}

ViewDraw draw_view(const AugmentSpec& spec, std::uint32_t side, Rng& rng) {
    ViewDraw d;
    d.scale = rng.uniform(spec.zoom_scale.min, spec.zoom_scale.max);
    const auto crop = std::min<std::int64_t>(side, static_cast<std::int64_t>(std::ceil(d.scale * side - 1e-9)));
    const auto slack = std::max<std::int64_t>(0, static_cast<std::int64_t>(side) - crop);
    d.crop_row = rng.uniform_int(0, slack);
    d.crop_col = rng.uniform_int(0, slack);
    d.flip_horizontal = rng.bernoulli(spec.horizontal_flip_prob);
    d.flip_vertical = rng.bernoulli(spec.vertical_flip_prob);
    d.gain = rng.uniform(spec.gain.min, spec.gain.max);
    d.gamma = rng.uniform(spec.gamma.min, spec.gamma.max);
    d.offset = rng.uniform(spec.offset.min, spec.offset.max);
    d.blur = rng.bernoulli(spec.blur_prob);
    d.sigma = rng.uniform(spec.blur_sigma.min, spec.blur_sigma.max);
    return d;
}

raster::Tile crop_and_resize(const raster::Tile& tile, std::size_t crop_side, std::size_t row0, std::size_t col0) {
    const std::size_t side = tile.side;
    require(crop_side >= 1 && row0 + crop_side <= side && col0 + crop_side <= side, ErrorKind::dimension,
            "augment: crop window outside tile");
    raster::Tile out = tile;
    if (crop_side == side) {
        return out;
    }
    // Pixel-centre aligned bilinear map from output cells into the crop window.
    const double scale = static_cast<double>(crop_side) / static_cast<double>(side);
    const double last = static_cast<double>(crop_side - 1);
    auto coord = [&](std::size_t o) {
        const double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
        return std::clamp(s, 0.0, last);
    };
    for (std::size_t r = 0; r < side; ++r) {
        const double sr = coord(r);
        const auto r0 = static_cast<std::size_t>(std::floor(sr));
        const auto r1 = std::min(r0 + 1, crop_side - 1);
        const double fr = sr - static_cast<double>(r0);
        for (std::size_t c = 0; c < side; ++c) {
            const double sc = coord(c);
            const auto c0 = static_cast<std::size_t>(std::floor(sc));
            const auto c1 = std::min(c0 + 1, crop_side - 1);
            const double fc = sc - static_cast<double>(c0);
            const double top = (1.0 - fc) * tile.at(row0 + r0, col0 + c0) + fc * tile.at(row0 + r0, col0 + c1);
            const double bottom = (1.0 - fc) * tile.at(row0 + r1, col0 + c0) + fc * tile.at(row0 + r1, col0 + c1);
            out.elevations[r * side + c] = static_cast<float>((1.0 - fr) * top + fr * bottom);
        }
    }
    return out;
}

raster::Tile flip_horizontal(const raster::Tile& tile) {
    raster::Tile out = tile;
    const std::size_t side = tile.side;
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            out.elevations[r * side + c] = tile.at(r, side - 1 - c);
        }
    }
    return out;
}

raster::Tile flip_vertical(const raster::Tile& tile) {
    raster::Tile out = tile;
    const std::size_t side = tile.side;
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            out.elevations[r * side + c] = tile.at(side - 1 - r, c);
        }
    }
    return out;
}

raster::Tile distort_values(const raster::Tile& tile, double gain, double gamma, double offset) {
    raster::Tile out = tile;
    for (auto& v : out.elevations) {
        if (v < 0.0f) {
            continue;  // only non-negative heights are remapped
        }
        const double mapped = gain * std::pow(static_cast<double>(v), gamma) + offset;
        v = static_cast<float>(std::max(0.0, mapped));
    }
    return out;
}

namespace {

// Reflect without repeating the edge sample: -1 -> 1, n -> n-2.
std::size_t reflect(std::int64_t i, std::int64_t n) {
    if (n == 1) {
        return 0;
    }
    const std::int64_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) {
        i += period;
    }
    return static_cast<std::size_t>(i < n ? i : period - i);
}

}  // namespace

raster::Tile gaussian_blur(const raster::Tile& tile, double sigma) {
    if (sigma <= 0.0) {
        return tile;
    }
    const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::int64_t k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        total += w;
    }
    for (auto& w : kernel) {
        w /= total;
    }
    const auto n = static_cast<std::int64_t>(tile.side);
    const std::size_t side = tile.side;
    std::vector<double> horizontal(side * side);
    for (std::size_t r = 0; r < side; ++r) {
        for (std::int64_t c = 0; c < n; ++c) {
            double acc = 0.0;
            for (std::int64_t k = -radius; k <= radius; ++k) {
                acc += kernel[static_cast<std::size_t>(k + radius)] * tile.at(r, reflect(c + k, n));
            }
            horizontal[r * side + static_cast<std::size_t>(c)] = acc;
        }
    }
    raster::Tile out = tile;
    for (std::int64_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            double acc = 0.0;
            for (std::int64_t k = -radius; k <= radius; ++k) {
                acc += kernel[static_cast<std::size_t>(k + radius)] * horizontal[reflect(r + k, n) * side + c];
            }
            out.elevations[static_cast<std::size_t>(r) * side + c] = static_cast<float>(acc);
        }
    }
    return out;
}

raster::Tile apply_view(const raster::Tile& tile, const ViewDraw& draw) {
    const std::size_t side = tile.side;
    const auto crop = std::min<std::size_t>(side, static_cast<std::size_t>(std::ceil(draw.scale * side - 1e-9)));
    raster::Tile out = crop_and_resize(tile, std::max<std::size_t>(crop, 1), static_cast<std::size_t>(draw.crop_row),
                                       static_cast<std::size_t>(draw.crop_col));
    if (draw.flip_horizontal) {
        out = flip_horizontal(out);
    }
    if (draw.flip_vertical) {
        out = flip_vertical(out);
    }
    if (draw.gain != 1.0 || draw.gamma != 1.0 || draw.offset != 0.0) {
        out = distort_values(out, draw.gain, draw.gamma, draw.offset);
    }
    if (draw.blur && draw.sigma > 0.0) {
        out = gaussian_blur(out, draw.sigma);
    }
    return out;
}

raster::Tile augment(const raster::Tile& tile, const AugmentSpec& spec, Rng& rng) {
    spec.validate();
    require(tile.side >= 8, ErrorKind::configuration, fmt::format("augment: tile side {} is below 8", tile.side));
    return apply_view(tile, draw_view(spec, tile.side, rng));
}

std::pair<raster::Tile, raster::Tile> make_pair(const raster::Tile& tile, const AugmentSpec& spec, Rng& rng) {
    auto first = augment(tile, spec, rng);
    auto second = augment(tile, spec, rng);
    return {std::move(first), std::move(second)};
}

}  // namespace terrembed::augment

#include "terrembed/landscape.hpp"

#include "terrembed/error.hpp"
#include "terrembed/io.hpp"
#include "terrembed/rng.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace terrembed::landscape {

std::string_view to_string(Archetype a) {
    switch (a) {
        case Archetype::urban: return "urban";
        case Archetype::suburban_detached: return "suburban-detached";
        case Archetype::suburban_flats: return "suburban-flats";
        case Archetype::rural: return "rural";
    }
    return "rural";
}

Archetype parse_archetype(std::string_view text) {
    for (auto a : {Archetype::urban, Archetype::suburban_detached, Archetype::suburban_flats, Archetype::rural}) {
        if (to_string(a) == text) {
            return a;
        }
    }
    fail(ErrorKind::configuration, fmt::format("unknown archetype \"{}\"", text));
}

namespace {
void check_range(const Range& r, std::string_view what, Archetype a) {
    require(r.min >= 0.0 && r.min <= r.max, ErrorKind::configuration,
            fmt::format("archetype {}: {} must satisfy 0 <= min <= max (got {}..{})", to_string(a), what, r.min, r.max));
}
}  // namespace

void ArchetypeParams::validate() const {
    require(building_density >= 0.0 && vegetation_density >= 0.0, ErrorKind::configuration,
            fmt::format("archetype {}: densities must be non-negative", to_string(name)));
    check_range(height_range, "height_range", name);
    check_range(footprint_range, "footprint_range", name);
    check_range(canopy_height_range, "canopy_height_range", name);
    check_range(canopy_radius_range, "canopy_radius_range", name);
}

std::vector<ArchetypeParams> default_archetypes() {
    return {
        {Archetype::urban, 14, {15, 40}, {10, 24}, 2, {4, 10}, {3, 6}},
        {Archetype::suburban_detached, 24, {5, 9}, {6, 11}, 14, {4, 12}, {3, 7}},
        {Archetype::suburban_flats, 9, {10, 22}, {14, 30}, 5, {4, 10}, {3, 7}},
        {Archetype::rural, 1, {4, 8}, {6, 12}, 22, {5, 16}, {4, 10}},
    };
}

const std::array<IndexCoupling, kIndexCount>& index_couplings() {
    static const std::array<IndexCoupling, kIndexCount> couplings = {{
        {0.6, -0.2, 0.2},   // income
        {0.5, -0.1, 0.3},   // employment
        {0.4, -0.3, 0.1},   // education
        {0.3, -0.2, 0.3},   // health
        {0.7, 0.1, 0.3},    // crime
        {-0.2, 0.1, 0.6},   // barriers
        {0.2, -0.9, 0.4},   // living_env
    }};
    return couplings;
}

void SceneConfig::validate() const {
    require(areas_x >= 1 && areas_y >= 1, ErrorKind::configuration, "scene needs at least one area in each direction");
    require(tile_side >= 1 && area_side >= tile_side, ErrorKind::configuration,
            fmt::format("area_side {} must be at least tile_side {}", area_side, tile_side));
    require(area_side % tile_side == 0, ErrorKind::configuration,
            fmt::format("area_side {} is not divisible by tile side {}", area_side, tile_side));
    require(cell_size > 0.0, ErrorKind::configuration, "cell_size must be positive");
    require(noise_sd >= 0.0, ErrorKind::configuration, "noise_sd must be non-negative");
    require(density_jitter >= 0.0 && density_jitter <= 1.0, ErrorKind::configuration,
            "density_jitter must lie in [0, 1]");
    require(group_block >= 1, ErrorKind::configuration, "group_block must be at least 1");
    require(!archetypes.empty(), ErrorKind::configuration, "at least one archetype is required");
    for (const auto& a : archetypes) {
        a.validate();
    }
}

raster::RasterGrid SynthScene::surface() const {
    std::vector<double> values = grid.values();
    for (auto& v : values) {
        v += base_elevation;
    }
    return raster::RasterGrid(grid.geometry(), std::move(values), grid.nodata());
}

raster::RasterGrid SynthScene::terrain() const {
    return raster::RasterGrid::filled(grid.geometry(), base_elevation, grid.nodata());
}

namespace {

double round_cm(double v) { return std::round(v * 100.0) / 100.0; }

// Stochastic rounding keeps the expected count equal to the density.
std::size_t draw_count(double density, Rng& rng) {
    const double whole = std::floor(density);
    return static_cast<std::size_t>(whole) + (rng.bernoulli(density - whole) ? 1 : 0);
}

struct Block {
    std::size_t row0, col0, side;
};

void render_buildings(std::vector<double>& cells, std::size_t cols, const Block& b, const ArchetypeParams& p,
                      std::size_t count, Rng& rng) {
    for (std::size_t k = 0; k < count; ++k) {
        const auto max_fp = static_cast<std::int64_t>(std::min<double>(p.footprint_range.max, b.side));
        const auto min_fp = std::min<std::int64_t>(std::max<std::int64_t>(1, std::llround(p.footprint_range.min)), max_fp);
        const auto w = static_cast<std::size_t>(rng.uniform_int(min_fp, max_fp));
        const auto h = static_cast<std::size_t>(rng.uniform_int(min_fp, max_fp));
        const auto r0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(b.side - h)));
        const auto c0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(b.side - w)));
        const double height = round_cm(rng.uniform(p.height_range.min, p.height_range.max));
        for (std::size_t r = r0; r < r0 + h; ++r) {
            for (std::size_t c = c0; c < c0 + w; ++c) {
                auto& cell = cells[(b.row0 + r) * cols + b.col0 + c];
                cell = std::max(cell, height);
            }
        }
    }
}

void render_canopy(std::vector<double>& cells, std::size_t cols, const Block& b, const ArchetypeParams& p,
                   std::size_t count, Rng& rng) {
    for (std::size_t k = 0; k < count; ++k) {
        const double radius = std::max(0.5, rng.uniform(p.canopy_radius_range.min, p.canopy_radius_range.max));
        const double cy = rng.uniform(0.0, static_cast<double>(b.side));
        const double cx = rng.uniform(0.0, static_cast<double>(b.side));
        const double peak = rng.uniform(p.canopy_height_range.min, p.canopy_height_range.max);
        const auto r_lo = static_cast<std::size_t>(std::max(0.0, std::floor(cy - radius)));
        const auto r_hi = static_cast<std::size_t>(std::min<double>(b.side, std::ceil(cy + radius)));
        const auto c_lo = static_cast<std::size_t>(std::max(0.0, std::floor(cx - radius)));
        const auto c_hi = static_cast<std::size_t>(std::min<double>(b.side, std::ceil(cx + radius)));
        for (std::size_t r = r_lo; r < r_hi; ++r) {
            for (std::size_t c = c_lo; c < c_hi; ++c) {
                const double dy = (r + 0.5 - cy) / radius;
                const double dx = (c + 0.5 - cx) / radius;
                const double q = 1.0 - dx * dx - dy * dy;
                if (q <= 0.0) {
                    continue;
                }
                auto& cell = cells[(b.row0 + r) * cols + b.col0 + c];
                cell = std::max(cell, round_cm(peak * std::sqrt(q)));
            }
        }
    }
}

}  // namespace

SynthScene generate_scene(const SceneConfig& config) {
    config.validate();
    const std::size_t rows = config.areas_y * config.area_side;
    const std::size_t cols = config.areas_x * config.area_side;
    const raster::GridGeometry geo{rows, cols, config.cell_size, config.origin_x, config.origin_y};
    std::vector<double> cells(rows * cols, 0.0);

    double max_building = 0.0;
    double max_vegetation = 0.0;
    double max_height = 0.0;
    for (const auto& a : config.archetypes) {
        max_building = std::max(max_building, a.building_density * (1.0 + config.density_jitter));
        max_vegetation = std::max(max_vegetation, a.vegetation_density * (1.0 + config.density_jitter));
        max_height = std::max({max_height, a.height_range.max, a.canopy_height_range.max});
    }

    SynthScene scene{raster::RasterGrid::filled(geo, 0.0), {}, {}, {}, {}, config.base_elevation};
    Rng layout_rng(derive_seed(config.seed, 0x5ce11e));
    const std::size_t groups_x = (config.areas_x + config.group_block - 1) / config.group_block;
    const std::size_t blocks_per_edge = config.area_side / config.tile_side;
    const double area_extent = static_cast<double>(config.area_side) * config.cell_size;

    struct Pending {
        std::string id;
        double building_density;
        double vegetation_density;
    };
    std::vector<Pending> pending;

    for (std::size_t ay = 0; ay < config.areas_y; ++ay) {
        for (std::size_t ax = 0; ax < config.areas_x; ++ax) {
            const std::size_t index = ay * config.areas_x + ax;
            raster::AreaUnit area;
            area.id = fmt::format("a{:04}", index);
            area.group_id = fmt::format("g{:02}", (ay / config.group_block) * groups_x + ax / config.group_block);
            const double x0 = config.origin_x + static_cast<double>(ax) * area_extent;
            const double y0 = config.origin_y + static_cast<double>(ay) * area_extent;
            area.polygon = {{x0, y0}, {x0 + area_extent, y0}, {x0 + area_extent, y0 + area_extent}, {x0, y0 + area_extent}};

            const auto choice = static_cast<std::size_t>(
                layout_rng.uniform_int(0, static_cast<std::int64_t>(config.archetypes.size()) - 1));
            const auto& params = config.archetypes[choice];
            const double jitter_b = layout_rng.uniform(1.0 - config.density_jitter, 1.0 + config.density_jitter);
            const double jitter_v = layout_rng.uniform(1.0 - config.density_jitter, 1.0 + config.density_jitter);
            const double density_b = params.building_density * jitter_b;
            const double density_v = params.vegetation_density * jitter_v;

            Rng render_rng(derive_seed(config.seed, 0xa4ea, index));
            const std::size_t area_row0 = rows - (ay + 1) * config.area_side;
            const std::size_t area_col0 = ax * config.area_side;
            for (std::size_t by = 0; by < blocks_per_edge; ++by) {
                for (std::size_t bx = 0; bx < blocks_per_edge; ++bx) {
                    const Block block{area_row0 + by * config.tile_side, area_col0 + bx * config.tile_side,
                                      config.tile_side};
                    const auto n_veg = draw_count(density_v, render_rng);
                    const auto n_bld = draw_count(density_b, render_rng);
                    render_canopy(cells, cols, block, params, n_veg, render_rng);
                    render_buildings(cells, cols, block, params, n_bld, render_rng);
                }
            }
            scene.archetype_map[area.id] = params.name;
            pending.push_back({area.id, density_b, density_v});
            scene.areas.push_back(std::move(area));
        }
    }

    scene.grid = raster::RasterGrid(geo, std::move(cells), -9999.0);

    Rng noise_rng(derive_seed(config.seed, 0x4015e));
    const auto& couplings = index_couplings();
    for (std::size_t i = 0; i < scene.areas.size(); ++i) {
        const std::size_t ax = i % config.areas_x;
        const std::size_t ay = i / config.areas_x;
        const std::size_t row0 = rows - (ay + 1) * config.area_side;
        const std::size_t col0 = ax * config.area_side;
        double sum = 0.0;
        for (std::size_t r = row0; r < row0 + config.area_side; ++r) {
            for (std::size_t c = col0; c < col0 + config.area_side; ++c) {
                sum += scene.grid.at(r, c);
            }
        }
        const double mean_height = sum / static_cast<double>(config.area_side * config.area_side);
        AreaLatents latent;
        latent.building_norm = max_building > 0.0 ? pending[i].building_density / max_building : 0.0;
        latent.vegetation_norm = max_vegetation > 0.0 ? pending[i].vegetation_density / max_vegetation : 0.0;
        latent.mean_height_norm = max_height > 0.0 ? mean_height / max_height : 0.0;
        std::array<double, kIndexCount> values{};
        for (std::size_t j = 0; j < kIndexCount; ++j) {
            const auto& k = couplings[j];
            values[j] = k.building * latent.building_norm + k.vegetation * latent.vegetation_norm +
                        k.height * latent.mean_height_norm;
            if (config.noise_sd > 0.0) {
                values[j] += noise_rng.normal(0.0, config.noise_sd);
            }
        }
        scene.latents[pending[i].id] = latent;
        scene.indices[pending[i].id] = values;
    }
    return scene;
}

std::string format_indices_csv(const std::map<std::string, std::array<double, kIndexCount>>& indices) {
    std::string out = "area_id";
    for (auto name : kIndexNames) {
        out += fmt::format(",{}", name);
    }
    out += '\n';
    for (const auto& [id, values] : indices) {
        out += id;
        for (double v : values) {
            out += ',' + io::format_double(v);
        }
        out += '\n';
    }
    return out;
}

void write_scene(const SynthScene& scene, const std::filesystem::path& dir) {
    raster::write_raster(scene.surface(), dir / "surface.asc");
    raster::write_raster(scene.terrain(), dir / "terrain.asc");
    io::write_text_atomic(dir / "areas.geojson", raster::format_areas_geojson(scene.areas));
    io::write_text_atomic(dir / "indices.csv", format_indices_csv(scene.indices));
    std::string archetypes = "area_id,archetype\n";
    for (const auto& [id, a] : scene.archetype_map) {
        archetypes += fmt::format("{},{}\n", id, to_string(a));
    }
    io::write_text_atomic(dir / "archetypes.csv", archetypes);
}

}  // namespace terrembed::landscape

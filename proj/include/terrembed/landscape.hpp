#pragma once

#include "terrembed/raster.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace terrembed::landscape {

enum class Archetype { urban, suburban_detached, suburban_flats, rural };

std::string_view to_string(Archetype a);
Archetype parse_archetype(std::string_view text);

struct Range {
    double min = 0.0;
    double max = 0.0;
};

/// Rendering parameters for one archetype. Densities are counts per tile
/// block; footprint and canopy radius are in cells, heights in meters.
struct ArchetypeParams {
    Archetype name = Archetype::rural;
    double building_density = 0.0;
    Range height_range;
    Range footprint_range;
    double vegetation_density = 0.0;
    Range canopy_height_range;
    Range canopy_radius_range{3.0, 8.0};

    void validate() const;
};

/// The four default archetypes: dense high-rise, detached houses with
/// gardens, mid-rise flats and rural green space.
std::vector<ArchetypeParams> default_archetypes();

inline constexpr std::size_t kIndexCount = 7;
inline constexpr std::array<std::string_view, kIndexCount> kIndexNames = {
    "income", "employment", "education", "health", "crime", "barriers", "living_env"};

/// index_j = building * building_norm + vegetation * vegetation_norm + height * mean_height_norm + noise
struct IndexCoupling {
    double building;
    double vegetation;
    double height;
};

/// Coupling constants, one per index in kIndexNames order.
const std::array<IndexCoupling, kIndexCount>& index_couplings();

struct SceneConfig {
    std::uint64_t seed = 7;
    std::size_t areas_x = 16;
    std::size_t areas_y = 16;
    std::size_t area_side = 256;  // cells
    std::size_t tile_side = 128;  // cells; area_side must be a multiple
    double cell_size = 1.0;
    double origin_x = 0.0;
    double origin_y = 0.0;
    double noise_sd = 0.05;
    std::size_t group_block = 4;  // areas per group edge (contiguous blocks)
    double density_jitter = 0.5;  // per-area density multiplier drawn from [1-j, 1+j]
    double base_elevation = 35.0; // flat bare-earth level of the emitted terrain raster
    std::vector<ArchetypeParams> archetypes = default_archetypes();

    void validate() const;
};

/// Per-area latent factors, each normalized to [0, 1].
struct AreaLatents {
    double building_norm = 0.0;
    double vegetation_norm = 0.0;
    double mean_height_norm = 0.0;
};

struct SynthScene {
    raster::RasterGrid grid;  // above-ground height
    std::vector<raster::AreaUnit> areas;
    std::map<std::string, Archetype> archetype_map;
    std::map<std::string, AreaLatents> latents;
    std::map<std::string, std::array<double, kIndexCount>> indices;
    double base_elevation = 0.0;

    raster::RasterGrid surface() const;
    raster::RasterGrid terrain() const;
};

SynthScene generate_scene(const SceneConfig& config);

std::string format_indices_csv(const std::map<std::string, std::array<double, kIndexCount>>& indices);

/// Writes surface.asc, terrain.asc, areas.geojson, indices.csv and archetypes.csv.
void write_scene(const SynthScene& scene, const std::filesystem::path& dir);

}  // namespace terrembed::landscape

#pragma once

#include "terrembed/aggregate.hpp"
#include "terrembed/embedding.hpp"
#include "terrembed/experiment.hpp"
#include "terrembed/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace terrembed::interpret {

inline constexpr std::size_t kDefaultRepresentatives = 8;

/// m tiles sampled (seeded) from the 5m members nearest to the centroid,
/// returned in ascending distance. Fewer than m members returns them all.
std::vector<std::uint64_t> representatives(const std::vector<embedding::TileEmbedding>& embeddings, std::size_t cluster,
                                           std::size_t m, std::uint64_t seed);

struct AreaRepresentation {
    std::string area_id;
    std::size_t cluster = 0;      // argmin of the mean distances, ties to the lowest index
    std::vector<double> distances;
    std::vector<double> ranks;    // min-rank / (n - 1) per cluster, 0 when n = 1
};

/// Uses only areas that have pooled features; input must be mean-pooled.
std::vector<AreaRepresentation> area_cluster_representation(const std::vector<aggregate::PooledFeatures>& mean_pooled);

std::string format_area_representation_csv(const std::vector<AreaRepresentation>& areas);

struct ClusterProfile {
    std::size_t cluster = 0;
    bool empty = true;
    std::size_t member_areas = 0;
    std::size_t member_tiles = 0;
    std::vector<double> z_means;  // one per index column
    std::vector<std::uint64_t> representatives;
};

/// Index values are z-scored over every area in `areas` (population sd; a
/// zero-variance index scores 0) and averaged per assigned cluster.
std::vector<ClusterProfile> cluster_index_profile(const std::vector<AreaRepresentation>& areas,
                                                  const experiment::IndexTable& indices, std::size_t k);

/// Member tiles and representatives filled from tile embeddings.
void attach_tiles(std::vector<ClusterProfile>& profiles, const std::vector<embedding::TileEmbedding>& embeddings,
                  std::size_t m, std::uint64_t seed);

std::string format_profiles_csv(const std::vector<ClusterProfile>& profiles, const std::vector<std::string>& index_names);

struct SilhouetteScore {
    std::size_t k = 0;
    double score = 0.0;
};

/// Highest score wins; ties go to the smaller K.
std::size_t select_k(const std::vector<SilhouetteScore>& scores);

/// Grayscale binary PGM of tiles laid side by side, each scaled to its own
/// [min, max].
std::vector<std::uint8_t> panel_pgm(const std::vector<const raster::Tile*>& tiles);

/// Writes cluster_<k>.pgm per non-empty cluster plus panels.json listing tile ids.
void write_panels(const std::vector<ClusterProfile>& profiles, const raster::TileSet& tiles,
                  const std::filesystem::path& dir);

}  // namespace terrembed::interpret

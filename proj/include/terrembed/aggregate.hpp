#pragma once

#include "terrembed/embedding.hpp"
#include "terrembed/raster.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace terrembed::aggregate {

enum class PoolMethod { mean, max };

std::string_view to_string(PoolMethod m);
PoolMethod parse_pool_method(std::string_view text);

struct PooledFeatures {
    std::string area_id;
    PoolMethod method = PoolMethod::mean;
    std::size_t tile_count = 0;
    std::vector<double> vector;  // empty when missing
    bool missing() const { return tile_count == 0; }
};

/// One entry per requested area, in the order given. Areas with no assigned
/// tiles are returned with tile_count 0 and an empty vector.
std::vector<PooledFeatures> pool(const std::vector<embedding::TileEmbedding>& embeddings,
                                 const raster::TileAssignment& assignment, const std::vector<std::string>& area_ids,
                                 PoolMethod method);

/// Element-wise mean or max of equally sized vectors.
std::vector<double> reduce(const std::vector<const std::vector<double>*>& members, PoolMethod method);

std::string format_pooled_csv(const std::vector<PooledFeatures>& pooled);
std::vector<PooledFeatures> parse_pooled_csv(const std::string& text, const std::string& context);

struct Coverage {
    std::size_t areas = 0;
    std::size_t covered = 0;
    std::vector<std::string> empty_areas;
    std::size_t unassigned_tiles = 0;
};

Coverage coverage(const std::vector<PooledFeatures>& pooled, std::size_t unassigned_tiles);
std::string format_coverage_json(const Coverage& c);

}  // namespace terrembed::aggregate

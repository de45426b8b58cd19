#include "terrembed/aggregate.hpp"

#include "terrembed/error.hpp"
#include "terrembed/io.hpp"
#include "terrembed/parallel.hpp"

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>

namespace terrembed::aggregate {

std::string_view to_string(PoolMethod m) { return m == PoolMethod::mean ? "mean" : "max"; }

PoolMethod parse_pool_method(std::string_view text) {
    if (text == "mean") {
        return PoolMethod::mean;
    }
    if (text == "max") {
        return PoolMethod::max;
    }
    fail(ErrorKind::configuration, fmt::format("unknown pooling method '{}' (expected mean or max)", text));
}

std::vector<double> reduce(const std::vector<const std::vector<double>*>& members, PoolMethod method) {
    require(!members.empty(), ErrorKind::state, "pool: no members to reduce");
    std::vector<double> out = *members.front();
    for (std::size_t m = 1; m < members.size(); ++m) {
        const auto& v = *members[m];
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] = method == PoolMethod::mean ? out[j] + v[j] : std::max(out[j], v[j]);
        }
    }
    if (method == PoolMethod::mean) {
        for (double& x : out) {
            x /= static_cast<double>(members.size());
        }
    }
    return out;
}

std::vector<PooledFeatures> pool(const std::vector<embedding::TileEmbedding>& embeddings,
                                 const raster::TileAssignment& assignment, const std::vector<std::string>& area_ids,
                                 PoolMethod method) {
    std::map<std::string, std::vector<const std::vector<double>*>> members;
    std::size_t k = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        const auto& e = embeddings[i];
        if (i == 0) {
            k = e.distances.size();
        }
        require(e.distances.size() == k, ErrorKind::dimension,
                fmt::format("pool: tile {} has {} distances, expected {}", e.tile_id, e.distances.size(), k));
        if (auto area = assignment.find(e.tile_id)) {
            members[*area].push_back(&e.distances);
        }
    }
    // Sum order follows the embedding order, so results are independent of
    // how areas are scheduled.
    std::vector<PooledFeatures> out(area_ids.size());
    parallel_for(area_ids.size(), [&](std::size_t a) {
        auto& p = out[a];
        p.area_id = area_ids[a];
        p.method = method;
        const auto it = members.find(area_ids[a]);
        if (it == members.end()) {
            return;
        }
        p.tile_count = it->second.size();
        p.vector = reduce(it->second, method);
    });
    return out;
}

std::string format_pooled_csv(const std::vector<PooledFeatures>& pooled) {
    std::size_t k = 0;
    for (const auto& p : pooled) {
        if (!p.missing()) {
            k = p.vector.size();
            break;
        }
    }
    std::string out = "area_id,method,n_tiles";
    for (std::size_t j = 0; j < k; ++j) {
        out += fmt::format(",d{}", j);
    }
    out += '\n';
    for (const auto& p : pooled) {
        out += fmt::format("{},{},{}", p.area_id, to_string(p.method), p.tile_count);
        for (std::size_t j = 0; j < k; ++j) {
            out += ',';
            if (!p.missing()) {
                require(p.vector.size() == k, ErrorKind::dimension, "pooled csv: mixed K");
                out += io::format_double(p.vector[j]);
            }
        }
        out += '\n';
    }
    return out;
}

std::vector<PooledFeatures> parse_pooled_csv(const std::string& text, const std::string& context) {
    const auto table = io::parse_csv(text, context);
    require(table.header.size() >= 3 && table.header[0] == "area_id" && table.header[1] == "method" &&
                table.header[2] == "n_tiles",
            ErrorKind::parse, fmt::format("{}: header must start with area_id,method,n_tiles", context));
    const std::size_t k = table.header.size() - 3;
    std::vector<PooledFeatures> out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto where = fmt::format("{} line {}", context, table.line_numbers[i]);
        require(row.size() == k + 3, ErrorKind::parse, fmt::format("{}: expected {} cells", where, k + 3));
        PooledFeatures p;
        p.area_id = row[0];
        p.method = parse_pool_method(row[1]);
        p.tile_count = static_cast<std::size_t>(io::parse_int(row[2], where));
        if (p.tile_count > 0) {
            for (std::size_t j = 0; j < k; ++j) {
                p.vector.push_back(io::parse_double(row[j + 3], where));
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

Coverage coverage(const std::vector<PooledFeatures>& pooled, std::size_t unassigned_tiles) {
    Coverage c;
    c.areas = pooled.size();
    c.unassigned_tiles = unassigned_tiles;
    for (const auto& p : pooled) {
        if (p.missing()) {
            c.empty_areas.push_back(p.area_id);
        } else {
            ++c.covered;
        }
    }
    return c;
}

std::string format_coverage_json(const Coverage& c) {
    nlohmann::ordered_json j;
    j["areas"] = c.areas;
    j["covered"] = c.covered;
    j["empty_areas"] = c.empty_areas;
    j["unassigned_tiles"] = c.unassigned_tiles;
    return j.dump(2) + "\n";
}

}  // namespace terrembed::aggregate

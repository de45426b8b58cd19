#include "terrembed/interpret.hpp"

#include "terrembed/error.hpp"
#include "terrembed/io.hpp"
#include "terrembed/log.hpp"
#include "terrembed/rng.hpp"

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace terrembed::interpret {

std::vector<std::uint64_t> representatives(const std::vector<embedding::TileEmbedding>& embeddings, std::size_t cluster,
                                           std::size_t m, std::uint64_t seed) {
    struct Member {
        double distance;
        std::uint64_t id;
    };
    std::vector<Member> members;
    for (const auto& e : embeddings) {
        if (e.cluster == cluster) {
            require(cluster < e.distances.size(), ErrorKind::dimension, "representatives: cluster index out of range");
            members.push_back({e.distances[cluster], e.tile_id});
        }
    }
    if (members.empty()) {
        log::warn("cluster {} has no member tiles", cluster);
        return {};
    }
    auto by_distance = [](const Member& a, const Member& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    };
    std::sort(members.begin(), members.end(), by_distance);
    members.resize(std::min(members.size(), 5 * m));
    if (members.size() > m) {
        Rng rng(derive_seed(seed, 0x7e9, cluster));
        rng.shuffle(members);
        members.resize(m);
        std::sort(members.begin(), members.end(), by_distance);
    }
    std::vector<std::uint64_t> ids;
    for (const auto& mem : members) {
        ids.push_back(mem.id);
    }
    return ids;
}

std::vector<AreaRepresentation> area_cluster_representation(const std::vector<aggregate::PooledFeatures>& mean_pooled) {
    std::vector<AreaRepresentation> out;
    std::size_t k = 0;
    for (const auto& p : mean_pooled) {
        require(p.method == aggregate::PoolMethod::mean, ErrorKind::configuration,
                "area representation needs mean-pooled features");
        if (p.missing()) {
            continue;
        }
        if (out.empty()) {
            k = p.vector.size();
        }
        require(p.vector.size() == k, ErrorKind::dimension, "area representation: mixed K");
        AreaRepresentation a;
        a.area_id = p.area_id;
        a.distances = p.vector;
        a.cluster = static_cast<std::size_t>(std::min_element(p.vector.begin(), p.vector.end()) - p.vector.begin());
        out.push_back(std::move(a));
    }
    const std::size_t n = out.size();
    for (auto& a : out) {
        a.ranks.assign(k, 0.0);
    }
    if (n > 1) {
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> column;
            for (const auto& a : out) {
                column.push_back(a.distances[c]);
            }
            std::sort(column.begin(), column.end());
            for (auto& a : out) {
                const auto below = std::lower_bound(column.begin(), column.end(), a.distances[c]) - column.begin();
                a.ranks[c] = static_cast<double>(below) / static_cast<double>(n - 1);
            }
        }
    }
    return out;
}

std::string format_area_representation_csv(const std::vector<AreaRepresentation>& areas) {
    const std::size_t k = areas.empty() ? 0 : areas.front().distances.size();
    std::string out = "area_id,cluster";
    for (std::size_t c = 0; c < k; ++c) {
        out += fmt::format(",d{}", c);
    }
    for (std::size_t c = 0; c < k; ++c) {
        out += fmt::format(",rank{}", c);
    }
    out += '\n';
    for (const auto& a : areas) {
        out += fmt::format("{},{}", a.area_id, a.cluster);
        for (double d : a.distances) {
            out += ',' + io::format_double(d);
        }
        for (double r : a.ranks) {
            out += ',' + io::format_double(r);
        }
        out += '\n';
    }
    return out;
}

std::vector<ClusterProfile> cluster_index_profile(const std::vector<AreaRepresentation>& areas,
                                                  const experiment::IndexTable& indices, std::size_t k) {
    const std::size_t n_idx = indices.names.size();
    std::vector<const std::vector<double>*> rows;
    for (const auto& a : areas) {
        const auto it = indices.values.find(a.area_id);
        require(it != indices.values.end(), ErrorKind::schema, fmt::format("area '{}' has no index values", a.area_id));
        require(a.cluster < k, ErrorKind::dimension, fmt::format("area '{}' assigned to cluster {} >= K", a.area_id, a.cluster));
        rows.push_back(&it->second);
    }
    std::vector<double> mean(n_idx, 0.0);
    std::vector<double> sd(n_idx, 0.0);
    const double n = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < n_idx; ++j) {
        for (const auto* r : rows) {
            mean[j] += (*r)[j];
        }
        mean[j] /= n;
        for (const auto* r : rows) {
            sd[j] += ((*r)[j] - mean[j]) * ((*r)[j] - mean[j]);
        }
        sd[j] = std::sqrt(sd[j] / n);
    }
    std::vector<ClusterProfile> profiles(k);
    for (std::size_t c = 0; c < k; ++c) {
        profiles[c].cluster = c;
        profiles[c].z_means.assign(n_idx, 0.0);
    }
    for (std::size_t i = 0; i < areas.size(); ++i) {
        auto& p = profiles[areas[i].cluster];
        ++p.member_areas;
        p.empty = false;
        for (std::size_t j = 0; j < n_idx; ++j) {
            p.z_means[j] += sd[j] > 0.0 ? ((*rows[i])[j] - mean[j]) / sd[j] : 0.0;
        }
    }
    for (auto& p : profiles) {
        if (p.member_areas > 0) {
            for (double& z : p.z_means) {
                z /= static_cast<double>(p.member_areas);
            }
        }
    }
    return profiles;
}

void attach_tiles(std::vector<ClusterProfile>& profiles, const std::vector<embedding::TileEmbedding>& embeddings,
                  std::size_t m, std::uint64_t seed) {
    for (auto& p : profiles) {
        p.member_tiles = static_cast<std::size_t>(std::count_if(
            embeddings.begin(), embeddings.end(), [&](const embedding::TileEmbedding& e) { return e.cluster == p.cluster; }));
        p.representatives = representatives(embeddings, p.cluster, m, seed);
    }
}

std::string format_profiles_csv(const std::vector<ClusterProfile>& profiles, const std::vector<std::string>& index_names) {
    std::string out = "cluster,empty,member_areas,member_tiles";
    for (const auto& name : index_names) {
        out += ",z_" + name;
    }
    out += ",representatives\n";
    for (const auto& p : profiles) {
        out += fmt::format("{},{},{},{}", p.cluster, p.empty ? 1 : 0, p.member_areas, p.member_tiles);
        for (double z : p.z_means) {
            out += ',';
            if (!p.empty) {
                out += io::format_double(z);
            }
        }
        std::string reps;
        for (std::size_t i = 0; i < p.representatives.size(); ++i) {
            reps += (i == 0 ? "" : " ") + std::to_string(p.representatives[i]);
        }
        out += ',' + reps + '\n';
    }
    return out;
}

std::size_t select_k(const std::vector<SilhouetteScore>& scores) {
    require(!scores.empty(), ErrorKind::configuration, "select_k: no silhouette scores");
    const SilhouetteScore* best = &scores.front();
    for (const auto& s : scores) {
        if (s.score > best->score || (s.score == best->score && s.k < best->k)) {
            best = &s;
        }
    }
    return best->k;
}

std::vector<std::uint8_t> panel_pgm(const std::vector<const raster::Tile*>& tiles) {
    require(!tiles.empty(), ErrorKind::configuration, "panel: no tiles");
    constexpr std::size_t kGap = 2;
    const std::size_t side = tiles.front()->side;
    const std::size_t width = tiles.size() * side + (tiles.size() - 1) * kGap;
    const std::string header = fmt::format("P5\n{} {}\n255\n", width, side);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const std::size_t offset = out.size();
    out.resize(offset + width * side, 255);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const auto& tile = *tiles[t];
        require(tile.side == side, ErrorKind::dimension, "panel: tiles differ in side");
        const auto [lo, hi] = std::minmax_element(tile.elevations.begin(), tile.elevations.end());
        const double range = std::max(static_cast<double>(*hi - *lo), 1e-9);
        for (std::size_t r = 0; r < side; ++r) {
            for (std::size_t c = 0; c < side; ++c) {
                const double v = (tile.elevations[r * side + c] - *lo) / range;
                out[offset + r * width + t * (side + kGap) + c] = static_cast<std::uint8_t>(std::lround(255.0 * v));
            }
        }
    }
    return out;
}

void write_panels(const std::vector<ClusterProfile>& profiles, const raster::TileSet& tiles,
                  const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::map<std::uint64_t, const raster::Tile*> by_id;
    for (const auto& t : tiles.tiles) {
        by_id.emplace(t.id, &t);
    }
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    for (const auto& p : profiles) {
        nlohmann::ordered_json entry;
        entry["cluster"] = p.cluster;
        entry["tile_ids"] = p.representatives;
        if (!p.representatives.empty()) {
            std::vector<const raster::Tile*> members;
            for (auto id : p.representatives) {
                const auto it = by_id.find(id);
                require(it != by_id.end(), ErrorKind::missing_input, fmt::format("panel: tile {} not in tile store", id));
                members.push_back(it->second);
            }
            const auto name = fmt::format("cluster_{}.pgm", p.cluster);
            io::write_file_atomic(dir / name, panel_pgm(members));
            entry["file"] = name;
        }
        manifest.push_back(std::move(entry));
    }
    io::write_text_atomic(dir / "panels.json", manifest.dump(2) + "\n");
}

}  // namespace terrembed::interpret

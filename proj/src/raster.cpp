#include "terrembed/raster.hpp"

#include "terrembed/error.hpp"
#include "terrembed/io.hpp"

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>

namespace terrembed::raster {

RasterGrid::RasterGrid(GridGeometry geometry, std::vector<double> values, double nodata)
    : geometry_(geometry), values_(std::move(values)), nodata_(nodata) {
    require(geometry_.rows >= 1 && geometry_.cols >= 1, ErrorKind::dimension, "raster needs at least one row and column");
    require(geometry_.cell_size > 0.0, ErrorKind::validation, "cell size must be positive");
    require(values_.size() == geometry_.rows * geometry_.cols, ErrorKind::dimension,
            fmt::format("raster expects {} values, got {}", geometry_.rows * geometry_.cols, values_.size()));
    mask_.resize(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) {
        mask_[i] = values_[i] == nodata_ ? 1 : 0;
    }
}

RasterGrid RasterGrid::filled(GridGeometry geometry, double value, double nodata) {
    return RasterGrid(geometry, std::vector<double>(geometry.rows * geometry.cols, value), nodata);
}

std::size_t RasterGrid::nodata_count() const { return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1)); }

void RasterGrid::set(std::size_t row, std::size_t col, double value) {
    const auto i = row * cols() + col;
    values_[i] = value;
    mask_[i] = value == nodata_ ? 1 : 0;
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Whitespace tokenizer over the whole body.
class Tokens {
public:
    explicit Tokens(std::string_view text) : text_(text) {}

    std::string_view next() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
        const auto start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
        return text_.substr(start, pos_ - start);
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace

RasterGrid parse_ascii_grid(const std::string& text) {
    static constexpr std::array<std::string_view, 6> fields = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
                                                               "nodata_value"};
    std::array<std::optional<double>, 6> header;
    Tokens tokens(text);
    for (std::size_t line = 0; line < fields.size(); ++line) {
        const auto key = tokens.next();
        const auto value = tokens.next();
        const auto name = lower(key);
        const auto it = std::find(fields.begin(), fields.end(), name);
        if (it == fields.end()) {
            fail(ErrorKind::parse, fmt::format("ascii grid header line {}: expected one of ncols, nrows, xllcorner, "
                                               "yllcorner, cellsize, NODATA_value; found \"{}\"",
                                               line + 1, key));
        }
        const auto idx = static_cast<std::size_t>(it - fields.begin());
        if (value.empty()) {
            fail(ErrorKind::parse, fmt::format("ascii grid header: missing value for {}", key));
        }
        header[idx] = io::parse_double(value, fmt::format("ascii grid header field {}", key));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (!header[i]) {
            fail(ErrorKind::parse, fmt::format("ascii grid header: missing field {}", i == 5 ? "NODATA_value" : fields[i]));
        }
    }
    const double ncols = *header[0];
    const double nrows = *header[1];
    if (ncols < 1 || nrows < 1 || ncols != std::floor(ncols) || nrows != std::floor(nrows)) {
        fail(ErrorKind::parse, fmt::format("ascii grid header: ncols/nrows must be positive integers (got {} x {})",
                                           ncols, nrows));
    }
    if (!(*header[4] > 0.0)) {
        fail(ErrorKind::parse, "ascii grid header field cellsize must be positive");
    }
    GridGeometry geo{static_cast<std::size_t>(nrows), static_cast<std::size_t>(ncols), *header[4], *header[2],
                     *header[3]};
    const std::size_t expected = geo.rows * geo.cols;
    std::vector<double> values;
    values.reserve(expected);
    for (auto tok = tokens.next(); !tok.empty(); tok = tokens.next()) {
        if (values.size() < expected) {
            values.push_back(io::parse_double(tok, "ascii grid body"));
        } else {
            values.push_back(0.0);
        }
    }
    if (values.size() != expected) {
        fail(ErrorKind::parse, fmt::format("ascii grid body: expected {} values, found {}", expected, values.size()));
    }
    return RasterGrid(geo, std::move(values), *header[5]);
}

RasterGrid load_raster(const std::filesystem::path& path) { return parse_ascii_grid(io::read_text(path)); }

std::string format_ascii_grid(const RasterGrid& grid) {
    const auto& g = grid.geometry();
    std::string out;
    out += fmt::format("ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n", g.cols, g.rows,
                       io::format_double(g.origin_x), io::format_double(g.origin_y), io::format_double(g.cell_size),
                       io::format_double(grid.nodata()));
    out.reserve(out.size() + grid.values().size() * 6);
    for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) {
            if (c) {
                out += ' ';
            }
            out += io::format_double(grid.at(r, c));
        }
        out += '\n';
    }
    return out;
}

void write_raster(const RasterGrid& grid, const std::filesystem::path& path) {
    io::write_text_atomic(path, format_ascii_grid(grid));
}

RasterGrid normalize_elevation(const RasterGrid& surface, const RasterGrid& terrain) {
    if (!(surface.geometry() == terrain.geometry())) {
        fail(ErrorKind::dimension,
             fmt::format("surface ({}x{}, cell {}) and terrain ({}x{}, cell {}) grids differ in shape or georeference",
                         surface.rows(), surface.cols(), surface.cell_size(), terrain.rows(), terrain.cols(),
                         terrain.cell_size()));
    }
    std::vector<double> out(surface.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (surface.is_nodata(i) || terrain.is_nodata(i)) ? surface.nodata()
                                                                : surface.values()[i] - terrain.values()[i];
    }
    // The difference can collide with the sentinel only by accident; keep the mask authoritative.
    RasterGrid result(surface.geometry(), std::move(out), surface.nodata());
    for (std::size_t i = 0; i < result.values().size(); ++i) {
        const bool missing = surface.is_nodata(i) || terrain.is_nodata(i);
        if (!missing && result.is_nodata(i)) {
            result.set(i / result.cols(), i % result.cols(), std::nextafter(result.values()[i], 0.0));
        }
    }
    return result;
}

NodataPolicy parse_nodata_policy(const std::string& text) {
    if (text == "impute-zero") {
        return NodataPolicy::impute_zero;
    }
    if (text == "drop-tile") {
        return NodataPolicy::drop_tile;
    }
    fail(ErrorKind::configuration, fmt::format("unknown nodata policy \"{}\" (impute-zero|drop-tile)", text));
}

TileSet tile_grid(const RasterGrid& grid, std::uint32_t side, NodataPolicy policy) {
    require(side >= 8, ErrorKind::configuration, fmt::format("tile side {} is below the minimum of 8", side));
    if (side > std::min(grid.rows(), grid.cols())) {
        fail(ErrorKind::dimension,
             fmt::format("tile side {} exceeds grid extent {}x{}", side, grid.rows(), grid.cols()));
    }
    const std::size_t per_row = grid.cols() / side;
    const std::size_t per_col = grid.rows() / side;
    const double cs = grid.cell_size();
    TileSet set;
    set.side = side;
    set.tiles.reserve(per_row * per_col);
    for (std::size_t ty = 0; ty < per_col; ++ty) {
        // Lattice rows count from the south edge; raster rows count from the north.
        const std::size_t row0 = grid.rows() - (ty + 1) * side;
        for (std::size_t tx = 0; tx < per_row; ++tx) {
            const std::size_t col0 = tx * side;
            Tile tile;
            tile.id = ty * per_row + tx;
            tile.side = side;
            tile.centroid_x = grid.geometry().origin_x + (static_cast<double>(tx) + 0.5) * side * cs;
            tile.centroid_y = grid.geometry().origin_y + (static_cast<double>(ty) + 0.5) * side * cs;
            tile.elevations.resize(static_cast<std::size_t>(side) * side);
            bool has_nodata = false;
            for (std::size_t r = 0; r < side; ++r) {
                for (std::size_t c = 0; c < side; ++c) {
                    const auto gr = row0 + r;
                    const auto gc = col0 + c;
                    float v = 0.0f;
                    if (grid.is_nodata(gr, gc)) {
                        has_nodata = true;
                    } else {
                        v = static_cast<float>(grid.at(gr, gc));
                    }
                    tile.elevations[r * side + c] = v;
                }
            }
            if (has_nodata && policy == NodataPolicy::drop_tile) {
                continue;
            }
            set.tiles.push_back(std::move(tile));
        }
    }
    return set;
}

Tile downsample(const Tile& tile, std::uint32_t target_side) {
    require(target_side >= 1 && target_side <= tile.side, ErrorKind::configuration,
            fmt::format("cannot resample a {}-cell tile to {} cells", tile.side, target_side));
    if (target_side == tile.side) {
        return tile;
    }
    const double scale = static_cast<double>(tile.side) / target_side;
    // Per output index: covered source cells and their overlap lengths.
    struct Span {
        std::size_t first = 0;
        std::vector<double> weights;
    };
    std::vector<Span> spans(target_side);
    for (std::uint32_t o = 0; o < target_side; ++o) {
        const double lo = o * scale;
        const double hi = (o + 1) * scale;
        auto& s = spans[o];
        s.first = static_cast<std::size_t>(std::floor(lo));
        for (auto i = s.first; i < tile.side && static_cast<double>(i) < hi; ++i) {
            const double overlap = std::min<double>(hi, i + 1.0) - std::max<double>(lo, static_cast<double>(i));
            s.weights.push_back(std::max(0.0, overlap) / scale);
        }
    }
    Tile out;
    out.id = tile.id;
    out.side = target_side;
    out.centroid_x = tile.centroid_x;
    out.centroid_y = tile.centroid_y;
    out.elevations.resize(static_cast<std::size_t>(target_side) * target_side);
    for (std::uint32_t orow = 0; orow < target_side; ++orow) {
        const auto& sr = spans[orow];
        for (std::uint32_t ocol = 0; ocol < target_side; ++ocol) {
            const auto& sc = spans[ocol];
            double acc = 0.0;
            for (std::size_t i = 0; i < sr.weights.size(); ++i) {
                double row_acc = 0.0;
                for (std::size_t j = 0; j < sc.weights.size(); ++j) {
                    row_acc += sc.weights[j] * tile.at(sr.first + i, sc.first + j);
                }
                acc += sr.weights[i] * row_acc;
            }
            out.elevations[orow * target_side + ocol] = static_cast<float>(acc);
        }
    }
    return out;
}

TileSet downsample(const TileSet& tiles, std::uint32_t target_side) {
    TileSet out;
    out.side = target_side;
    out.tiles.reserve(tiles.tiles.size());
    for (const auto& t : tiles.tiles) {
        out.tiles.push_back(downsample(t, target_side));
    }
    return out;
}

std::vector<std::uint8_t> encode_tile_store(const TileSet& tiles) {
    io::BinaryWriter w;
    w.magic("TERR");
    w.u16(1);
    w.u32(tiles.side);
    w.u64(tiles.tiles.size());
    for (const auto& t : tiles.tiles) {
        require(t.side == tiles.side && t.elevations.size() == static_cast<std::size_t>(t.side) * t.side,
                ErrorKind::dimension, fmt::format("tile {} does not match store side {}", t.id, tiles.side));
        w.u64(t.id);
        w.f64(t.centroid_x);
        w.f64(t.centroid_y);
        for (float v : t.elevations) {
            w.f32(v);
        }
    }
    return w.buffer();
}

TileSet decode_tile_store(const std::vector<std::uint8_t>& bytes) {
    io::BinaryReader r(bytes, "tile store");
    r.expect_magic("TERR");
    const auto version = r.u16();
    if (version != 1) {
        fail(ErrorKind::unsupported_version, fmt::format("tile store: unsupported version {}", version));
    }
    TileSet set;
    set.side = r.u32();
    const auto count = r.u64();
    const std::size_t per_tile = 24 + 4ULL * set.side * set.side;
    if (count > r.remaining() / std::max<std::size_t>(per_tile, 1)) {
        fail(ErrorKind::format, fmt::format("tile store: header claims {} tiles but file is too short", count));
    }
    set.tiles.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Tile t;
        t.side = set.side;
        t.id = r.u64();
        t.centroid_x = r.f64();
        t.centroid_y = r.f64();
        t.elevations.resize(static_cast<std::size_t>(set.side) * set.side);
        for (auto& v : t.elevations) {
            v = r.f32();
        }
        set.tiles.push_back(std::move(t));
    }
    if (!r.at_end()) {
        fail(ErrorKind::format, "tile store: trailing bytes");
    }
    return set;
}

void save_tile_store(const TileSet& tiles, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_tile_store(tiles));
}

TileSet load_tile_store(const std::filesystem::path& path) { return decode_tile_store(io::read_file(path)); }

namespace {

std::vector<Point> open_ring(const std::vector<Point>& polygon) {
    std::vector<Point> ring = polygon;
    if (ring.size() >= 2 && ring.front().x == ring.back().x && ring.front().y == ring.back().y) {
        ring.pop_back();
    }
    return ring;
}

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(Point a, Point b, Point p) {
    if (cross(a, b, p) != 0.0) {
        return false;
    }
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

int orientation(Point a, Point b, Point c) {
    const double v = cross(a, b, c);
    return (v > 0) - (v < 0);
}

bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
    const int o1 = orientation(p1, p2, q1);
    const int o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1);
    const int o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) {
        return true;
    }
    return (o1 == 0 && on_segment(p1, p2, q1)) || (o2 == 0 && on_segment(p1, p2, q2)) ||
           (o3 == 0 && on_segment(q1, q2, p1)) || (o4 == 0 && on_segment(q1, q2, p2));
}

}  // namespace

double polygon_area(const std::vector<Point>& polygon) {
    const auto ring = open_ring(polygon);
    double twice = 0.0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        const auto& a = ring[i];
        const auto& b = ring[(i + 1) % ring.size()];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

void validate_area(const AreaUnit& area) {
    const auto ring = open_ring(area.polygon);
    require(ring.size() >= 3, ErrorKind::validation,
            fmt::format("area {}: polygon needs at least 3 vertices, has {}", area.id, ring.size()));
    require(!area.group_id.empty(), ErrorKind::validation, fmt::format("area {}: missing group_id", area.id));
    require(std::abs(polygon_area(ring)) > 0.0, ErrorKind::validation,
            fmt::format("area {}: degenerate polygon (zero area)", area.id));
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) {
                continue;
            }
            if (segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n])) {
                fail(ErrorKind::validation, fmt::format("area {}: polygon edges {} and {} intersect", area.id, i, j));
            }
        }
    }
}

bool contains(const std::vector<Point>& polygon, Point p) {
    const auto ring = open_ring(polygon);
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (on_segment(ring[i], ring[(i + 1) % n], p)) {
            return true;
        }
    }
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto& a = ring[i];
        const auto& b = ring[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x_cross) {
                inside = !inside;
            }
        }
    }
    return inside;
}

std::vector<AreaUnit> parse_areas_geojson(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::parse, fmt::format("area file: {}", e.what()));
    }
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features") || !doc["features"].is_array()) {
        fail(ErrorKind::parse, "area file: expected a GeoJSON FeatureCollection");
    }
    std::vector<AreaUnit> areas;
    std::size_t index = 0;
    for (const auto& feature : doc["features"]) {
        const auto where = fmt::format("area file feature {}", index++);
        try {
            const auto& geom = feature.at("geometry");
            if (geom.at("type") != "Polygon") {
                fail(ErrorKind::parse, fmt::format("{}: only Polygon geometries are supported", where));
            }
            const auto& props = feature.at("properties");
            AreaUnit area;
            area.id = props.at("id").get<std::string>();
            area.group_id = props.at("group_id").get<std::string>();
            const auto& exterior = geom.at("coordinates").at(0);
            for (const auto& xy : exterior) {
                area.polygon.push_back({xy.at(0).get<double>(), xy.at(1).get<double>()});
            }
            validate_area(area);
            areas.push_back(std::move(area));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::parse, fmt::format("{}: {}", where, e.what()));
        }
    }
    return areas;
}

std::vector<AreaUnit> load_areas(const std::filesystem::path& path) { return parse_areas_geojson(io::read_text(path)); }

std::string format_areas_geojson(const std::vector<AreaUnit>& areas) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& area : areas) {
        nlohmann::json ring = nlohmann::json::array();
        for (const auto& p : area.polygon) {
            ring.push_back({p.x, p.y});
        }
        const auto& front = area.polygon.front();
        const auto& back = area.polygon.back();
        if (front.x != back.x || front.y != back.y) {
            ring.push_back({front.x, front.y});
        }
        features.push_back({{"type", "Feature"},
                            {"properties", {{"id", area.id}, {"group_id", area.group_id}}},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", nlohmann::json::array({ring})}}}});
    }
    nlohmann::json doc{{"type", "FeatureCollection"}, {"features", features}};
    return doc.dump(1) + "\n";
}

std::optional<std::string> TileAssignment::find(std::uint64_t tile_id) const {
    const auto it = area_of.find(tile_id);
    if (it == area_of.end()) {
        return std::nullopt;
    }
    return it->second;
}

TileAssignment assign_by_centroid(const TileSet& tiles, const std::vector<AreaUnit>& areas) {
    struct Indexed {
        const AreaUnit* area;
        double min_x, min_y, max_x, max_y;
    };
    std::vector<Indexed> sorted;
    sorted.reserve(areas.size());
    for (const auto& a : areas) {
        validate_area(a);
        Indexed ix{&a, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                   -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (const auto& p : a.polygon) {
            ix.min_x = std::min(ix.min_x, p.x);
            ix.min_y = std::min(ix.min_y, p.y);
            ix.max_x = std::max(ix.max_x, p.x);
            ix.max_y = std::max(ix.max_y, p.y);
        }
        sorted.push_back(ix);
    }
    std::sort(sorted.begin(), sorted.end(), [](const Indexed& a, const Indexed& b) { return a.area->id < b.area->id; });
    TileAssignment out;
    for (const auto& tile : tiles.tiles) {
        const Point c{tile.centroid_x, tile.centroid_y};
        bool matched = false;
        for (const auto& ix : sorted) {
            if (c.x < ix.min_x || c.x > ix.max_x || c.y < ix.min_y || c.y > ix.max_y) {
                continue;
            }
            if (contains(ix.area->polygon, c)) {
                out.area_of[tile.id] = ix.area->id;
                matched = true;
                break;
            }
        }
        if (!matched) {
            out.unassigned.push_back(tile.id);
        }
    }
    return out;
}

std::string format_assignment_csv(const TileAssignment& assignment) {
    std::string out = "tile_id,area_id\n";
    for (const auto& [tile, area] : assignment.area_of) {
        out += fmt::format("{},{}\n", tile, area);
    }
    for (auto tile : assignment.unassigned) {
        out += fmt::format("{},\n", tile);
    }
    return out;
}

TileAssignment parse_assignment_csv(const std::string& text) {
    const auto table = io::parse_csv(text, "assignment csv");
    const auto tile_col = table.column("tile_id");
    const auto area_col = table.column("area_id");
    TileAssignment out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        require(row.size() == table.header.size(), ErrorKind::parse,
                fmt::format("assignment csv line {}: expected {} cells", table.line_numbers[i], table.header.size()));
        const auto id = static_cast<std::uint64_t>(io::parse_int(row[tile_col], "tile_id"));
        if (row[area_col].empty()) {
            out.unassigned.push_back(id);
        } else {
            out.area_of[id] = row[area_col];
        }
    }
    return out;
}

}  // namespace terrembed::raster

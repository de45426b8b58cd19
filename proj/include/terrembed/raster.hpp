#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace terrembed::raster {

struct GridGeometry {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double cell_size = 1.0;  // meters per cell
    double origin_x = 0.0;   // lower-left corner
    double origin_y = 0.0;

    bool operator==(const GridGeometry&) const = default;
};

/// Elevation raster. Row 0 is the northern (top) row, as in the ASCII grid
/// file. Nodata cells carry the sentinel value and are flagged in a mask.
class RasterGrid {
public:
    RasterGrid(GridGeometry geometry, std::vector<double> values, double nodata);

    /// Grid filled with one value and no nodata cells.
    static RasterGrid filled(GridGeometry geometry, double value, double nodata = -9999.0);

    const GridGeometry& geometry() const { return geometry_; }
    std::size_t rows() const { return geometry_.rows; }
    std::size_t cols() const { return geometry_.cols; }
    double cell_size() const { return geometry_.cell_size; }
    double nodata() const { return nodata_; }

    const std::vector<double>& values() const { return values_; }
    double at(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }
    bool is_nodata(std::size_t row, std::size_t col) const { return mask_[row * cols() + col] != 0; }
    bool is_nodata(std::size_t index) const { return mask_[index] != 0; }
    std::size_t nodata_count() const;

    /// Sets a cell; a value equal to the sentinel flags it as nodata.
    void set(std::size_t row, std::size_t col, double value);

private:
    GridGeometry geometry_;
    std::vector<double> values_;
    std::vector<std::uint8_t> mask_;
    double nodata_;
};

RasterGrid parse_ascii_grid(const std::string& text);
RasterGrid load_raster(const std::filesystem::path& path);
std::string format_ascii_grid(const RasterGrid& grid);
void write_raster(const RasterGrid& grid, const std::filesystem::path& path);

/// Above-ground height: surface minus terrain, nodata where either input is.
RasterGrid normalize_elevation(const RasterGrid& surface, const RasterGrid& terrain);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Tile {
    std::uint64_t id = 0;
    std::uint32_t side = 0;
    std::vector<float> elevations;  // side*side, row-major, top row first
    double centroid_x = 0.0;
    double centroid_y = 0.0;

    float at(std::size_t row, std::size_t col) const { return elevations[row * side + col]; }
    bool operator==(const Tile&) const = default;
};

struct TileSet {
    std::uint32_t side = 0;
    std::vector<Tile> tiles;
};

enum class NodataPolicy { impute_zero, drop_tile };

NodataPolicy parse_nodata_policy(const std::string& text);

/// Non-overlapping square tiles on a lattice anchored at the grid origin
/// (lower-left); partial tiles at the north and east edges are dropped. Tile
/// id = lattice_row_from_south * tiles_per_row + lattice_col_from_west.
TileSet tile_grid(const RasterGrid& grid, std::uint32_t side, NodataPolicy policy = NodataPolicy::impute_zero);

/// Box-filter (area-mean) resampling to a smaller side; fractional cell
/// overlaps are weighted by area.
Tile downsample(const Tile& tile, std::uint32_t target_side);
TileSet downsample(const TileSet& tiles, std::uint32_t target_side);

std::vector<std::uint8_t> encode_tile_store(const TileSet& tiles);
TileSet decode_tile_store(const std::vector<std::uint8_t>& bytes);
void save_tile_store(const TileSet& tiles, const std::filesystem::path& path);
TileSet load_tile_store(const std::filesystem::path& path);

struct AreaUnit {
    std::string id;
    std::vector<Point> polygon;  // exterior ring; closing vertex optional
    std::string group_id;
};

/// Throws a validation error for fewer than 3 vertices, zero area,
/// self-intersection or an empty group id.
void validate_area(const AreaUnit& area);
double polygon_area(const std::vector<Point>& polygon);

/// Even-odd ray casting; points on the boundary count as inside.
bool contains(const std::vector<Point>& polygon, Point p);

std::vector<AreaUnit> parse_areas_geojson(const std::string& text);
std::vector<AreaUnit> load_areas(const std::filesystem::path& path);
std::string format_areas_geojson(const std::vector<AreaUnit>& areas);

struct TileAssignment {
    std::map<std::uint64_t, std::string> area_of;  // tile id -> area id
    std::vector<std::uint64_t> unassigned;

    std::optional<std::string> find(std::uint64_t tile_id) const;
};

/// Each tile goes to the first containing area in ascending area-id order.
TileAssignment assign_by_centroid(const TileSet& tiles, const std::vector<AreaUnit>& areas);

std::string format_assignment_csv(const TileAssignment& assignment);
TileAssignment parse_assignment_csv(const std::string& text);

}  // namespace terrembed::raster

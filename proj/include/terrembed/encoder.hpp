#pragma once

#include "terrembed/raster.hpp"
#include "terrembed/tensor_file.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace terrembed::encoder {

struct ConvStage {
    std::uint32_t out_channels = 16;
    std::uint32_t kernel = 3;  // odd; zero "same" padding of kernel/2
    std::uint32_t stride = 2;  // 1 or 2

    bool operator==(const ConvStage&) const = default;
};

inline constexpr std::size_t kHeadLayers = 4;

struct EncoderConfig {
    std::uint32_t input_side = 64;
    std::vector<ConvStage> stages = {{16, 3, 2}, {32, 3, 2}, {64, 3, 2}, {128, 3, 2}};
    std::uint32_t head_width = 512;  // width of each of the four hidden dense layers
    std::uint32_t projection_dim = 64;

    std::uint32_t backbone_dim() const { return stages.empty() ? 0 : stages.back().out_channels; }
    /// Spatial side entering each stage, plus the final side (size stages+1).
    std::vector<std::uint32_t> spatial_sides() const;
    void validate() const;

    bool operator==(const EncoderConfig&) const = default;
};

enum class LayerTap { backbone, l1, l2, l3, l4, projection };

std::string_view to_string(LayerTap tap);
LayerTap parse_layer_tap(std::string_view text);

class EncoderModel {
public:
    /// He-uniform weights (limit sqrt(6 / fan_in)), zero biases. All weights
    /// are rounded to f32 so the weight file round-trips exactly.
    static EncoderModel initialize(const EncoderConfig& config, std::uint64_t seed);

    /// Builds a model from a parameter list; names and shapes must match the config.
    static EncoderModel from_parameters(const EncoderConfig& config, std::vector<NamedTensor> parameters,
                                        std::uint64_t seed = 0);

    const EncoderConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }

    const std::vector<NamedTensor>& parameters() const { return parameters_; }
    std::vector<NamedTensor>& parameters() { return parameters_; }
    const NamedTensor& parameter(std::string_view name) const;

    std::size_t tap_width(LayerTap tap) const;

    /// Rounds every parameter to the nearest f32.
    void quantize_to_f32();

    /// Inference forward pass; returns one row per tile.
    Eigen::MatrixXd forward(std::span<const raster::Tile> batch, LayerTap tap) const;

    bool operator==(const EncoderModel& other) const;

private:
    EncoderModel(EncoderConfig config, std::vector<NamedTensor> parameters, std::uint64_t seed);

    EncoderConfig config_;
    std::vector<NamedTensor> parameters_;
    std::uint64_t seed_ = 0;
};

/// Expected parameter names and shapes for a config, in storage order.
std::vector<NamedTensor> parameter_layout(const EncoderConfig& config);

/// Activations cached by a training forward pass. Samples are processed in
/// fixed-size chunks so gradient reduction order never depends on threading.
class ForwardTrace {
public:
    ForwardTrace() = default;

    bool valid() const { return valid_; }
    LayerTap tap() const { return tap_; }
    std::size_t batch_size() const { return batch_size_; }
    const Eigen::MatrixXd& output() const;

private:
    friend ForwardTrace forward_trace(const EncoderModel&, std::span<const raster::Tile>, LayerTap);
    friend std::vector<NamedTensor> backward(const EncoderModel&, const ForwardTrace&, const Eigen::MatrixXd&);

    struct Chunk {
        std::size_t first = 0;
        std::size_t count = 0;
        std::vector<Eigen::MatrixXd> columns;      // im2col per stage
        std::vector<Eigen::MatrixXd> activations;  // post-ReLU per stage
    };

    bool valid_ = false;
    LayerTap tap_ = LayerTap::projection;
    std::size_t batch_size_ = 0;
    std::vector<Chunk> chunks_;
    Eigen::MatrixXd pooled_;                    // batch x backbone_dim
    std::vector<Eigen::MatrixXd> hidden_;       // post-ReLU head outputs
    Eigen::MatrixXd projection_;
};

ForwardTrace forward_trace(const EncoderModel& model, std::span<const raster::Tile> batch, LayerTap tap);

/// Reverse-mode gradients of sum(upstream .* output) for every parameter,
/// returned in parameter order with matching shapes.
std::vector<NamedTensor> backward(const EncoderModel& model, const ForwardTrace& trace, const Eigen::MatrixXd& upstream);

std::vector<std::uint8_t> encode_weights(const EncoderModel& model);
EncoderModel decode_weights(const std::vector<std::uint8_t>& bytes);
void save_weights(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_weights(const std::filesystem::path& path);

/// Raw representations keyed by tile id (one row per id, same order).
struct RepresentationMatrix {
    std::vector<std::uint64_t> tile_ids;
    Eigen::MatrixXd values;
};

std::string format_representations_csv(const RepresentationMatrix& reps);
RepresentationMatrix parse_representations_csv(const std::string& text, const std::string& context);
RepresentationMatrix import_external_features(const std::filesystem::path& path);

struct AlignedRepresentations {
    RepresentationMatrix matrix;                 // rows follow the tile store order
    std::vector<std::uint64_t> missing_features; // tiles in the store without a feature row
    std::vector<std::uint64_t> unknown_tiles;    // feature rows whose tile is not in the store
};

AlignedRepresentations align_to_tiles(const RepresentationMatrix& reps, const raster::TileSet& tiles);

}  // namespace terrembed::encoder

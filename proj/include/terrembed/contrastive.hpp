#pragma once

#include "terrembed/augment.hpp"
#include "terrembed/encoder.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace terrembed::contrastive {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct ContrastiveConfig {
    double temperature = 0.5;
    std::size_t batch_pairs = 64;  // N tiles per batch, 2N views
    std::size_t epochs = 30;
    double learning_rate = 1e-3;
    AdamConfig adam;
    std::uint64_t seed = 11;

    void validate() const;
};

struct NtXentResult {
    double loss = 0.0;
    Eigen::MatrixXd gradient;  // d loss / d z, same shape as the batch
};

/// NT-Xent over 2N row vectors where rows (2k, 2k+1) are the two views of
/// one tile. Loss is the mean over all 2N anchors.
NtXentResult nt_xent(const Eigen::MatrixXd& projections, double temperature);

/// Adam over every encoder parameter; weights are re-rounded to f32 after
/// each step.
class AdamOptimizer {
public:
    AdamOptimizer(const encoder::EncoderModel& model, double learning_rate, AdamConfig config);

    void step(encoder::EncoderModel& model, const std::vector<NamedTensor>& gradients);

    std::size_t steps() const { return steps_; }

private:
    double learning_rate_;
    AdamConfig config_;
    std::size_t steps_ = 0;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
};

struct TrainResult {
    encoder::EncoderModel model;
    std::vector<double> epoch_loss;  // mean NT-Xent loss per epoch
};

/// SimCLR pretraining. Each epoch shuffles the tiles, forms consecutive
/// N-tile batches (a trailing short batch is dropped), augments each tile
/// into two views with a stream derived from (seed, epoch, tile id) and
/// takes one Adam step per batch.
TrainResult train_simclr(const raster::TileSet& tiles, const encoder::EncoderModel& initial,
                         const augment::AugmentSpec& spec, const ContrastiveConfig& config);

std::string format_loss_trace_csv(const std::vector<double>& epoch_loss);

/// Un-augmented forward pass to the given tap, rows ordered by tile id.
encoder::RepresentationMatrix extract_representations(const encoder::EncoderModel& model, const raster::TileSet& tiles,
                                                      encoder::LayerTap tap, std::size_t batch_size = 64);

}  // namespace terrembed::contrastive

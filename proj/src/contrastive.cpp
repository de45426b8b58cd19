#include "terrembed/contrastive.hpp"

#include "terrembed/error.hpp"
#include "terrembed/io.hpp"
#include "terrembed/log.hpp"
#include "terrembed/parallel.hpp"
#include "terrembed/rng.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace terrembed::contrastive {

void ContrastiveConfig::validate() const {
    require(temperature > 0.0, ErrorKind::configuration, "contrastive: temperature must be positive");
    require(batch_pairs >= 2, ErrorKind::configuration, "contrastive: batch_pairs must be at least 2");
    require(learning_rate > 0.0, ErrorKind::configuration, "contrastive: learning_rate must be positive");
    require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0,
            ErrorKind::configuration, "contrastive: invalid Adam parameters");
}

NtXentResult nt_xent(const Eigen::MatrixXd& z, double temperature) {
    require(temperature > 0.0, ErrorKind::configuration, "nt_xent: temperature must be positive");
    const Eigen::Index m = z.rows();
    require(m >= 2 && m % 2 == 0, ErrorKind::dimension, fmt::format("nt_xent: need an even number of rows, got {}", m));
    Eigen::VectorXd norms = z.rowwise().norm();
    for (Eigen::Index i = 0; i < m; ++i) {
        require(norms(i) > 0.0 && std::isfinite(norms(i)), ErrorKind::degenerate,
                fmt::format("nt_xent: row {} has zero or non-finite norm", i));
    }
    const Eigen::MatrixXd u = norms.cwiseInverse().asDiagonal() * z;
    const Eigen::MatrixXd logits = (u * u.transpose()) / temperature;

    // d loss / d logits(i, k), anchors i over all rows, k != i.
    Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(m, m);
    double total = 0.0;
    const double inv_m = 1.0 / static_cast<double>(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Index pos = (i % 2 == 0) ? i + 1 : i - 1;
        double max_logit = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < m; ++k) {
            if (k != i) {
                max_logit = std::max(max_logit, logits(i, k));
            }
        }
        double denom = 0.0;
        for (Eigen::Index k = 0; k < m; ++k) {
            if (k != i) {
                denom += std::exp(logits(i, k) - max_logit);
            }
        }
        total += -(logits(i, pos) - max_logit) + std::log(denom);
        for (Eigen::Index k = 0; k < m; ++k) {
            if (k == i) {
                continue;
            }
            const double p = std::exp(logits(i, k) - max_logit) / denom;
            d_logits(i, k) = (p - (k == pos ? 1.0 : 0.0)) * inv_m;
        }
    }
    // logits = u u^T / t, so dL/du = (D + D^T) u / t.
    const Eigen::MatrixXd d_u = (d_logits + d_logits.transpose()) * u / temperature;
    NtXentResult result;
    result.loss = total * inv_m;
    result.gradient.resize(m, z.cols());
    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::RowVectorXd g = d_u.row(i);
        const Eigen::RowVectorXd ui = u.row(i);
        result.gradient.row(i) = (g - ui * ui.dot(g)) / norms(i);
    }
    return result;
}

AdamOptimizer::AdamOptimizer(const encoder::EncoderModel& model, double learning_rate, AdamConfig config)
    : learning_rate_(learning_rate), config_(config) {
    for (const auto& t : model.parameters()) {
        first_moment_.emplace_back(t.data.size(), 0.0);
        second_moment_.emplace_back(t.data.size(), 0.0);
    }
}

void AdamOptimizer::step(encoder::EncoderModel& model, const std::vector<NamedTensor>& gradients) {
    auto& params = model.parameters();
    require(gradients.size() == params.size(), ErrorKind::dimension, "adam: gradient list does not match parameters");
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& w = params[p].data;
        const auto& g = gradients[p].data;
        auto& m = first_moment_[p];
        auto& v = second_moment_[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            w[i] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
    model.quantize_to_f32();
}

TrainResult train_simclr(const raster::TileSet& tiles, const encoder::EncoderModel& initial,
                         const augment::AugmentSpec& spec, const ContrastiveConfig& config) {
    config.validate();
    spec.validate();
    const std::size_t n = config.batch_pairs;
    require(tiles.tiles.size() >= 2 * n, ErrorKind::configuration,
            fmt::format("simclr: {} tiles are fewer than 2N = {}", tiles.tiles.size(), 2 * n));
    require(tiles.side == initial.config().input_side, ErrorKind::dimension,
            fmt::format("simclr: tiles have side {} but the encoder expects {}", tiles.side, initial.config().input_side));

    TrainResult result{initial, {}};
    AdamOptimizer optimizer(result.model, config.learning_rate, config.adam);
    std::vector<std::size_t> order(tiles.tiles.size());
    const std::size_t batches = tiles.tiles.size() / n;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(config.seed, 0x5f0ff1e, epoch));
        shuffle_rng.shuffle(order);
        double epoch_total = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            std::vector<raster::Tile> views(2 * n);
            parallel_for(n, [&](std::size_t k) {
                const auto& tile = tiles.tiles[order[b * n + k]];
                Rng rng(derive_seed(config.seed, epoch, tile.id));
                auto [first, second] = augment::make_pair(tile, spec, rng);
                views[2 * k] = std::move(first);
                views[2 * k + 1] = std::move(second);
            });
            const auto trace = encoder::forward_trace(result.model, views, encoder::LayerTap::projection);
            const auto loss = nt_xent(trace.output(), config.temperature);
            if (!std::isfinite(loss.loss)) {
                fail(ErrorKind::runtime, fmt::format("simclr: non-finite loss at epoch {}, batch {}", epoch, b));
            }
            const auto grads = encoder::backward(result.model, trace, loss.gradient);
            optimizer.step(result.model, grads);
            epoch_total += loss.loss;
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(batches));
        log::info("simclr epoch {}/{}: mean loss {:.6f}", epoch + 1, config.epochs, result.epoch_loss.back());
    }
    return result;
}

std::string format_loss_trace_csv(const std::vector<double>& epoch_loss) {
    std::string out = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
        out += fmt::format("{},{}\n", e + 1, io::format_double(epoch_loss[e]));
    }
    return out;
}

encoder::RepresentationMatrix extract_representations(const encoder::EncoderModel& model, const raster::TileSet& tiles,
                                                      encoder::LayerTap tap, std::size_t batch_size) {
    require(batch_size >= 1, ErrorKind::configuration, "extract: batch size must be positive");
    if (tap == encoder::LayerTap::projection) {
        log::warn("extracting projection-head outputs; the dense layers L1-L4 are the recommended embedding taps");
    }
    std::vector<std::size_t> order(tiles.tiles.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return tiles.tiles[a].id < tiles.tiles[b].id; });
    encoder::RepresentationMatrix reps;
    reps.values.resize(static_cast<Eigen::Index>(order.size()), static_cast<Eigen::Index>(model.tap_width(tap)));
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, order.size() - start);
        std::vector<raster::Tile> batch;
        batch.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            batch.push_back(tiles.tiles[order[start + i]]);
        }
        reps.values.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) =
            model.forward(batch, tap);
    }
    for (auto i : order) {
        reps.tile_ids.push_back(tiles.tiles[i].id);
    }
    return reps;
}

}  // namespace terrembed::contrastive

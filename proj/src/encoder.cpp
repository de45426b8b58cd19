#include "terrembed/encoder.hpp"

#include "terrembed/error.hpp"
#include "terrembed/io.hpp"
#include "terrembed/parallel.hpp"
#include "terrembed/rng.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace terrembed::encoder {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;

constexpr std::size_t kChunkSize = 8;

std::string conv_name(std::size_t i, std::string_view part) { return fmt::format("conv{}.{}", i + 1, part); }
std::string dense_name(std::size_t i, std::string_view part) { return fmt::format("dense{}.{}", i + 1, part); }

}  // namespace

std::vector<std::uint32_t> EncoderConfig::spatial_sides() const {
    std::vector<std::uint32_t> sides{input_side};
    for (const auto& s : stages) {
        const auto in = sides.back();
        const auto pad = s.kernel / 2;
        sides.push_back((in + 2 * pad - s.kernel) / s.stride + 1);
    }
    return sides;
}

void EncoderConfig::validate() const {
    require(input_side >= 1, ErrorKind::configuration, "encoder: input_side must be positive");
    require(!stages.empty(), ErrorKind::configuration, "encoder: at least one conv stage is required");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        require(s.out_channels >= 1, ErrorKind::configuration, fmt::format("encoder: stage {} has no channels", i + 1));
        require(s.kernel % 2 == 1, ErrorKind::configuration,
                fmt::format("encoder: stage {} kernel {} must be odd", i + 1, s.kernel));
        require(s.stride == 1 || s.stride == 2, ErrorKind::configuration,
                fmt::format("encoder: stage {} stride {} must halve (2) or preserve (1) the extent", i + 1, s.stride));
    }
    const auto sides = spatial_sides();
    for (std::size_t i = 0; i < stages.size(); ++i) {
        require(sides[i] >= 1 && sides[i + 1] >= 1, ErrorKind::configuration,
                fmt::format("encoder: stage {} collapses the spatial extent", i + 1));
        require(sides[i] >= stages[i].kernel / 2 + 1, ErrorKind::configuration,
                fmt::format("encoder: stage {} kernel {} is too large for a {}-cell input", i + 1, stages[i].kernel,
                            sides[i]));
    }
    require(head_width >= 1 && projection_dim >= 1, ErrorKind::configuration,
            "encoder: head and projection widths must be positive");
}

std::string_view to_string(LayerTap tap) {
    switch (tap) {
        case LayerTap::backbone: return "backbone";
        case LayerTap::l1: return "L1";
        case LayerTap::l2: return "L2";
        case LayerTap::l3: return "L3";
        case LayerTap::l4: return "L4";
        case LayerTap::projection: return "projection";
    }
    return "projection";
}

LayerTap parse_layer_tap(std::string_view text) {
    for (auto tap : {LayerTap::backbone, LayerTap::l1, LayerTap::l2, LayerTap::l3, LayerTap::l4, LayerTap::projection}) {
        if (to_string(tap) == text) {
            return tap;
        }
    }
    if (text == "l1") return LayerTap::l1;
    if (text == "l2") return LayerTap::l2;
    if (text == "l3") return LayerTap::l3;
    if (text == "l4") return LayerTap::l4;
    fail(ErrorKind::configuration, fmt::format("unknown layer tap \"{}\" (backbone|L1|L2|L3|L4|projection)", text));
}

std::vector<NamedTensor> parameter_layout(const EncoderConfig& config) {
    config.validate();
    std::vector<NamedTensor> layout;
    std::uint32_t in_channels = 1;
    for (std::size_t i = 0; i < config.stages.size(); ++i) {
        const auto& s = config.stages[i];
        layout.push_back({conv_name(i, "weight"), {s.out_channels, in_channels, s.kernel, s.kernel}, {}});
        layout.push_back({conv_name(i, "bias"), {s.out_channels}, {}});
        in_channels = s.out_channels;
    }
    std::uint32_t width = config.backbone_dim();
    for (std::size_t i = 0; i < kHeadLayers; ++i) {
        layout.push_back({dense_name(i, "weight"), {width, config.head_width}, {}});
        layout.push_back({dense_name(i, "bias"), {config.head_width}, {}});
        width = config.head_width;
    }
    layout.push_back({"projection.weight", {width, config.projection_dim}, {}});
    layout.push_back({"projection.bias", {config.projection_dim}, {}});
    for (auto& t : layout) {
        t.data.assign(t.element_count(), 0.0);
    }
    return layout;
}

EncoderModel::EncoderModel(EncoderConfig config, std::vector<NamedTensor> parameters, std::uint64_t seed)
    : config_(std::move(config)), parameters_(std::move(parameters)), seed_(seed) {}

EncoderModel EncoderModel::initialize(const EncoderConfig& config, std::uint64_t seed) {
    auto params = parameter_layout(config);
    Rng rng(seed);
    for (auto& t : params) {
        if (t.shape.size() == 1) {
            continue;  // biases start at zero
        }
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < t.shape.size(); ++d) {
            fan_in *= t.shape[d];
        }
        if (t.shape.size() == 2) {
            fan_in = t.shape[0];  // dense weights are stored [in, out]
        }
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& v : t.data) {
            v = static_cast<double>(static_cast<float>(rng.uniform(-limit, limit)));
        }
    }
    return EncoderModel(config, std::move(params), seed);
}

EncoderModel EncoderModel::from_parameters(const EncoderConfig& config, std::vector<NamedTensor> parameters,
                                           std::uint64_t seed) {
    const auto layout = parameter_layout(config);
    if (layout.size() != parameters.size()) {
        fail(ErrorKind::format, fmt::format("encoder: expected {} parameter tensors, found {}", layout.size(),
                                            parameters.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (layout[i].name != parameters[i].name || layout[i].shape != parameters[i].shape) {
            fail(ErrorKind::format, fmt::format("encoder: parameter {} (\"{}\") does not match the expected \"{}\" "
                                                "shape table",
                                                i, parameters[i].name, layout[i].name));
        }
        for (double v : parameters[i].data) {
            require(std::isfinite(v), ErrorKind::format, fmt::format("encoder: non-finite value in {}", layout[i].name));
        }
    }
    return EncoderModel(config, std::move(parameters), seed);
}

const NamedTensor& EncoderModel::parameter(std::string_view name) const {
    for (const auto& t : parameters_) {
        if (t.name == name) {
            return t;
        }
    }
    fail(ErrorKind::state, fmt::format("encoder: no parameter named {}", name));
}

std::size_t EncoderModel::tap_width(LayerTap tap) const {
    switch (tap) {
        case LayerTap::backbone: return config_.backbone_dim();
        case LayerTap::projection: return config_.projection_dim;
        default: return config_.head_width;
    }
}

void EncoderModel::quantize_to_f32() {
    for (auto& t : parameters_) {
        for (auto& v : t.data) {
            v = static_cast<double>(static_cast<float>(v));
        }
    }
}

bool EncoderModel::operator==(const EncoderModel& other) const {
    if (!(config_ == other.config_) || parameters_.size() != other.parameters_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < parameters_.size(); ++i) {
        const auto& a = parameters_[i];
        const auto& b = other.parameters_[i];
        if (a.name != b.name || a.shape != b.shape || a.data != b.data) {
            return false;
        }
    }
    return true;
}

namespace {

struct StageGeometry {
    std::size_t in_channels, out_channels, kernel, stride, pad, in_side, out_side;
};

std::vector<StageGeometry> stage_geometry(const EncoderConfig& config) {
    const auto sides = config.spatial_sides();
    std::vector<StageGeometry> out;
    std::size_t in_channels = 1;
    for (std::size_t i = 0; i < config.stages.size(); ++i) {
        const auto& s = config.stages[i];
        out.push_back({in_channels, s.out_channels, s.kernel, s.stride, s.kernel / 2, sides[i], sides[i + 1]});
        in_channels = s.out_channels;
    }
    return out;
}

// Input activations for a chunk: 1 x (count * side^2), sample-major.
RowMat chunk_input(std::span<const raster::Tile> batch, std::size_t first, std::size_t count, std::size_t side) {
    const std::size_t area = side * side;
    RowMat input(1, count * area);
    for (std::size_t s = 0; s < count; ++s) {
        const auto& tile = batch[first + s];
        for (std::size_t j = 0; j < area; ++j) {
            input(0, s * area + j) = static_cast<double>(tile.elevations[j]);
        }
    }
    return input;
}

RowMat im2col(const RowMat& input, const StageGeometry& g, std::size_t count) {
    const std::size_t k = g.kernel;
    const std::size_t in_area = g.in_side * g.in_side;
    const std::size_t out_area = g.out_side * g.out_side;
    RowMat cols = RowMat::Zero(static_cast<Eigen::Index>(g.in_channels * k * k), static_cast<Eigen::Index>(count * out_area));
    const auto in_side = static_cast<std::int64_t>(g.in_side);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const double* src_channel = input.data() + ci * input.cols();
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* dst = cols.data() + ((ci * k + ky) * k + kx) * cols.cols();
                for (std::size_t s = 0; s < count; ++s) {
                    const double* src = src_channel + s * in_area;
                    double* out = dst + s * out_area;
                    for (std::size_t oy = 0; oy < g.out_side; ++oy) {
                        const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) - static_cast<std::int64_t>(g.pad);
                        if (iy < 0 || iy >= in_side) {
                            continue;
                        }
                        for (std::size_t ox = 0; ox < g.out_side; ++ox) {
                            const auto ix =
                                static_cast<std::int64_t>(ox * g.stride + kx) - static_cast<std::int64_t>(g.pad);
                            if (ix < 0 || ix >= in_side) {
                                continue;
                            }
                            out[oy * g.out_side + ox] = src[static_cast<std::size_t>(iy) * g.in_side + static_cast<std::size_t>(ix)];
                        }
                    }
                }
            }
        }
    }
    return cols;
}

RowMat col2im(const RowMat& cols, const StageGeometry& g, std::size_t count) {
    const std::size_t k = g.kernel;
    const std::size_t in_area = g.in_side * g.in_side;
    const std::size_t out_area = g.out_side * g.out_side;
    RowMat grad = RowMat::Zero(static_cast<Eigen::Index>(g.in_channels), static_cast<Eigen::Index>(count * in_area));
    const auto in_side = static_cast<std::int64_t>(g.in_side);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        double* dst_channel = grad.data() + ci * grad.cols();
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* src = cols.data() + ((ci * k + ky) * k + kx) * cols.cols();
                for (std::size_t s = 0; s < count; ++s) {
                    double* dst = dst_channel + s * in_area;
                    const double* in = src + s * out_area;
                    for (std::size_t oy = 0; oy < g.out_side; ++oy) {
                        const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) - static_cast<std::int64_t>(g.pad);
                        if (iy < 0 || iy >= in_side) {
                            continue;
                        }
                        for (std::size_t ox = 0; ox < g.out_side; ++ox) {
                            const auto ix =
                                static_cast<std::int64_t>(ox * g.stride + kx) - static_cast<std::int64_t>(g.pad);
                            if (ix < 0 || ix >= in_side) {
                                continue;
                            }
                            dst[static_cast<std::size_t>(iy) * g.in_side + static_cast<std::size_t>(ix)] +=
                                in[oy * g.out_side + ox];
                        }
                    }
                }
            }
        }
    }
    return grad;
}

ConstRowMap as_matrix(const NamedTensor& t, std::size_t rows, std::size_t cols) {
    return ConstRowMap(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Eigen::Map<const Eigen::VectorXd> as_vector(const NamedTensor& t) {
    return Eigen::Map<const Eigen::VectorXd>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

// Conv stages for one chunk; fills columns/activations when tracing.
RowMat conv_forward(const EncoderModel& model, const std::vector<StageGeometry>& geo, std::span<const raster::Tile> batch,
                    std::size_t first, std::size_t count, std::vector<RowMat>* columns, std::vector<RowMat>* activations) {
    RowMat current = chunk_input(batch, first, count, geo.front().in_side);
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < geo.size(); ++i) {
        const auto& g = geo[i];
        RowMat cols = im2col(current, g, count);
        const auto weight = as_matrix(params[2 * i], g.out_channels, g.in_channels * g.kernel * g.kernel);
        const auto bias = as_vector(params[2 * i + 1]);
        RowMat z = weight * cols;
        z.colwise() += bias;
        current = z.cwiseMax(0.0);
        if (columns) {
            columns->push_back(std::move(cols));
            activations->push_back(current);
        }
    }
    return current;
}

void pool_into(const RowMat& last, std::size_t first, std::size_t count, std::size_t area, Eigen::MatrixXd& pooled) {
    for (std::size_t s = 0; s < count; ++s) {
        for (Eigen::Index c = 0; c < last.rows(); ++c) {
            pooled(static_cast<Eigen::Index>(first + s), c) =
                last.row(c).segment(static_cast<Eigen::Index>(s * area), static_cast<Eigen::Index>(area)).sum() /
                static_cast<double>(area);
        }
    }
}

Eigen::MatrixXd dense(const Eigen::MatrixXd& input, const NamedTensor& weight, const NamedTensor& bias, bool relu) {
    const auto w = as_matrix(weight, weight.shape[0], weight.shape[1]);
    Eigen::MatrixXd out = input * w;
    out.rowwise() += as_vector(bias).transpose();
    if (relu) {
        out = out.cwiseMax(0.0);
    }
    return out;
}

std::size_t head_depth(LayerTap tap) {
    switch (tap) {
        case LayerTap::backbone: return 0;
        case LayerTap::l1: return 1;
        case LayerTap::l2: return 2;
        case LayerTap::l3: return 3;
        default: return 4;
    }
}

void check_batch(const EncoderModel& model, std::span<const raster::Tile> batch) {
    require(!batch.empty(), ErrorKind::dimension, "encoder: empty batch");
    const auto side = model.config().input_side;
    for (const auto& t : batch) {
        if (t.side != side || t.elevations.size() != static_cast<std::size_t>(side) * side) {
            fail(ErrorKind::dimension,
                 fmt::format("encoder: tile {} has side {} but the model expects {}", t.id, t.side, side));
        }
    }
}

}  // namespace

Eigen::MatrixXd EncoderModel::forward(std::span<const raster::Tile> batch, LayerTap tap) const {
    check_batch(*this, batch);
    const auto geo = stage_geometry(config_);
    const std::size_t n = batch.size();
    const std::size_t area = geo.back().out_side * geo.back().out_side;
    Eigen::MatrixXd pooled(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config_.backbone_dim()));
    const std::size_t n_chunks = (n + kChunkSize - 1) / kChunkSize;
    parallel_for(n_chunks, [&](std::size_t c) {
        const std::size_t first = c * kChunkSize;
        const std::size_t count = std::min(kChunkSize, n - first);
        const RowMat last = conv_forward(*this, geo, batch, first, count, nullptr, nullptr);
        pool_into(last, first, count, area, pooled);
    });
    if (tap == LayerTap::backbone) {
        return pooled;
    }
    const std::size_t base = 2 * geo.size();
    Eigen::MatrixXd h = pooled;
    for (std::size_t j = 0; j < head_depth(tap); ++j) {
        h = dense(h, parameters_[base + 2 * j], parameters_[base + 2 * j + 1], true);
    }
    if (tap == LayerTap::projection) {
        h = dense(h, parameters_[base + 2 * kHeadLayers], parameters_[base + 2 * kHeadLayers + 1], false);
    }
    return h;
}

const Eigen::MatrixXd& ForwardTrace::output() const {
    require(valid_, ErrorKind::state, "encoder: no cached forward pass");
    switch (tap_) {
        case LayerTap::backbone: return pooled_;
        case LayerTap::projection: return projection_;
        default: return hidden_[head_depth(tap_) - 1];
    }
}

ForwardTrace forward_trace(const EncoderModel& model, std::span<const raster::Tile> batch, LayerTap tap) {
    check_batch(model, batch);
    const auto& config = model.config();
    const auto geo = stage_geometry(config);
    const std::size_t n = batch.size();
    const std::size_t area = geo.back().out_side * geo.back().out_side;
    ForwardTrace trace;
    trace.tap_ = tap;
    trace.batch_size_ = n;
    trace.pooled_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config.backbone_dim()));
    const std::size_t n_chunks = (n + kChunkSize - 1) / kChunkSize;
    trace.chunks_.resize(n_chunks);
    parallel_for(n_chunks, [&](std::size_t c) {
        auto& chunk = trace.chunks_[c];
        chunk.first = c * kChunkSize;
        chunk.count = std::min(kChunkSize, n - chunk.first);
        std::vector<RowMat> columns;
        std::vector<RowMat> activations;
        conv_forward(model, geo, batch, chunk.first, chunk.count, &columns, &activations);
        pool_into(activations.back(), chunk.first, chunk.count, area, trace.pooled_);
        for (auto& m : columns) {
            chunk.columns.emplace_back(std::move(m));
        }
        for (auto& m : activations) {
            chunk.activations.emplace_back(std::move(m));
        }
    });
    const auto& params = model.parameters();
    const std::size_t base = 2 * geo.size();
    Eigen::MatrixXd h = trace.pooled_;
    for (std::size_t j = 0; j < head_depth(tap); ++j) {
        h = dense(h, params[base + 2 * j], params[base + 2 * j + 1], true);
        trace.hidden_.push_back(h);
    }
    if (tap == LayerTap::projection) {
        trace.projection_ = dense(h, params[base + 2 * kHeadLayers], params[base + 2 * kHeadLayers + 1], false);
    }
    trace.valid_ = true;
    return trace;
}

std::vector<NamedTensor> backward(const EncoderModel& model, const ForwardTrace& trace, const Eigen::MatrixXd& upstream) {
    require(trace.valid_, ErrorKind::state, "encoder: backward called without cached activations");
    const auto& out = trace.output();
    require(upstream.rows() == out.rows() && upstream.cols() == out.cols(), ErrorKind::dimension,
            fmt::format("encoder: upstream gradient is {}x{}, output is {}x{}", upstream.rows(), upstream.cols(),
                        out.rows(), out.cols()));
    const auto& config = model.config();
    const auto& params = model.parameters();
    const auto geo = stage_geometry(config);
    auto grads = parameter_layout(config);
    const std::size_t base = 2 * geo.size();
    const std::size_t depth = head_depth(trace.tap_);

    auto write_dense = [&](std::size_t index, const Eigen::MatrixXd& input, const Eigen::MatrixXd& dz) {
        RowMap gw(grads[index].data.data(), input.cols(), dz.cols());
        gw = input.transpose() * dz;
        Eigen::Map<Eigen::VectorXd> gb(grads[index + 1].data.data(), dz.cols());
        gb = dz.colwise().sum().transpose();
    };

    Eigen::MatrixXd grad = upstream;
    if (trace.tap_ == LayerTap::projection) {
        const auto& input = depth == 0 ? trace.pooled_ : trace.hidden_[depth - 1];
        const std::size_t index = base + 2 * kHeadLayers;
        write_dense(index, input, grad);
        const auto w = as_matrix(params[index], params[index].shape[0], params[index].shape[1]);
        grad = grad * w.transpose();
    }
    for (std::size_t j = depth; j-- > 0;) {
        const auto& act = trace.hidden_[j];
        Eigen::MatrixXd dz = grad.cwiseProduct((act.array() > 0.0).cast<double>().matrix());
        const auto& input = j == 0 ? trace.pooled_ : trace.hidden_[j - 1];
        const std::size_t index = base + 2 * j;
        write_dense(index, input, dz);
        const auto w = as_matrix(params[index], params[index].shape[0], params[index].shape[1]);
        grad = dz * w.transpose();
    }

    // grad is now d(loss)/d(pooled), batch x backbone_dim.
    const std::size_t area = geo.back().out_side * geo.back().out_side;
    struct ChunkGrads {
        std::vector<RowMat> weight;
        std::vector<Eigen::VectorXd> bias;
    };
    std::vector<ChunkGrads> partial(trace.chunks_.size());
    parallel_for(trace.chunks_.size(), [&](std::size_t c) {
        const auto& chunk = trace.chunks_[c];
        auto& pg = partial[c];
        pg.weight.resize(geo.size());
        pg.bias.resize(geo.size());
        const auto& last = chunk.activations.back();
        RowMat d_act(last.rows(), last.cols());
        for (std::size_t s = 0; s < chunk.count; ++s) {
            for (Eigen::Index ch = 0; ch < last.rows(); ++ch) {
                d_act.row(ch).segment(static_cast<Eigen::Index>(s * area), static_cast<Eigen::Index>(area))
                    .setConstant(grad(static_cast<Eigen::Index>(chunk.first + s), ch) / static_cast<double>(area));
            }
        }
        for (std::size_t i = geo.size(); i-- > 0;) {
            const auto& g = geo[i];
            const auto& act = chunk.activations[i];
            RowMat dz = d_act.cwiseProduct((act.array() > 0.0).cast<double>().matrix());
            pg.weight[i] = dz * chunk.columns[i].transpose();
            pg.bias[i] = dz.rowwise().sum();
            if (i > 0) {
                const auto w = as_matrix(params[2 * i], g.out_channels, g.in_channels * g.kernel * g.kernel);
                RowMat dcols = w.transpose() * dz;
                d_act = col2im(dcols, g, chunk.count);
            }
        }
    });
    for (std::size_t i = 0; i < geo.size(); ++i) {
        auto& gw = grads[2 * i].data;
        auto& gb = grads[2 * i + 1].data;
        for (const auto& pg : partial) {
            for (std::size_t e = 0; e < gw.size(); ++e) {
                gw[e] += pg.weight[i].data()[e];
            }
            for (std::size_t e = 0; e < gb.size(); ++e) {
                gb[e] += pg.bias[i](static_cast<Eigen::Index>(e));
            }
        }
    }
    return grads;
}

namespace {

const TensorFileFormat kWeightFormat{"DREM", 1, ElementType::f32};
constexpr std::string_view kArchName = "meta.arch";

NamedTensor arch_tensor(const EncoderConfig& c) {
    NamedTensor t{std::string(kArchName), {}, {}};
    t.data.push_back(c.input_side);
    t.data.push_back(static_cast<double>(c.stages.size()));
    for (const auto& s : c.stages) {
        t.data.push_back(s.out_channels);
        t.data.push_back(s.kernel);
        t.data.push_back(s.stride);
    }
    t.data.push_back(c.head_width);
    t.data.push_back(c.projection_dim);
    t.shape = {static_cast<std::uint32_t>(t.data.size())};
    return t;
}

EncoderConfig arch_config(const NamedTensor& t) {
    auto bad = [] { fail(ErrorKind::format, "weight file: malformed architecture record"); };
    const auto& d = t.data;
    if (d.size() < 4) {
        bad();
    }
    EncoderConfig c;
    c.input_side = static_cast<std::uint32_t>(d[0]);
    const auto n = static_cast<std::size_t>(d[1]);
    if (d.size() != 4 + 3 * n) {
        bad();
    }
    c.stages.clear();
    for (std::size_t i = 0; i < n; ++i) {
        c.stages.push_back({static_cast<std::uint32_t>(d[2 + 3 * i]), static_cast<std::uint32_t>(d[3 + 3 * i]),
                            static_cast<std::uint32_t>(d[4 + 3 * i])});
    }
    c.head_width = static_cast<std::uint32_t>(d[2 + 3 * n]);
    c.projection_dim = static_cast<std::uint32_t>(d[3 + 3 * n]);
    try {
        c.validate();
    } catch (const Error&) {
        bad();
    }
    return c;
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const EncoderModel& model) {
    std::vector<NamedTensor> tensors;
    tensors.push_back(arch_tensor(model.config()));
    for (const auto& t : model.parameters()) {
        tensors.push_back(t);
    }
    return encode_tensors(kWeightFormat, tensors);
}

EncoderModel decode_weights(const std::vector<std::uint8_t>& bytes) {
    auto tensors = decode_tensors(kWeightFormat, bytes, "weight file");
    if (tensors.empty() || tensors.front().name != kArchName) {
        fail(ErrorKind::format, "weight file: missing architecture record");
    }
    const auto config = arch_config(tensors.front());
    tensors.erase(tensors.begin());
    return EncoderModel::from_parameters(config, std::move(tensors));
}

void save_weights(const EncoderModel& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_weights(model));
}

EncoderModel load_weights(const std::filesystem::path& path) { return decode_weights(io::read_file(path)); }

std::string format_representations_csv(const RepresentationMatrix& reps) {
    std::string out = "tile_id";
    for (Eigen::Index j = 0; j < reps.values.cols(); ++j) {
        out += fmt::format(",f{}", j);
    }
    out += '\n';
    for (std::size_t i = 0; i < reps.tile_ids.size(); ++i) {
        out += std::to_string(reps.tile_ids[i]);
        for (Eigen::Index j = 0; j < reps.values.cols(); ++j) {
            out += ',';
            out += io::format_double(reps.values(static_cast<Eigen::Index>(i), j));
        }
        out += '\n';
    }
    return out;
}

RepresentationMatrix parse_representations_csv(const std::string& text, const std::string& context) {
    const auto table = io::parse_csv(text, context);
    require(!table.header.empty() && table.header.front() == "tile_id", ErrorKind::parse,
            fmt::format("{}: header must start with tile_id", context));
    const std::size_t width = table.header.size() - 1;
    for (std::size_t j = 0; j < width; ++j) {
        require(table.header[j + 1] == fmt::format("f{}", j), ErrorKind::parse,
                fmt::format("{}: header column {} should be f{}", context, j + 1, j));
    }
    RepresentationMatrix reps;
    reps.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(width));
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto line = table.line_numbers[i];
        if (row.size() != width + 1) {
            fail(ErrorKind::parse,
                 fmt::format("{} line {}: expected {} feature values, found {}", context, line, width, row.size() - 1));
        }
        const auto where = fmt::format("{} line {}", context, line);
        const auto id = io::parse_int(row[0], where);
        require(id >= 0, ErrorKind::parse, fmt::format("{}: negative tile_id", where));
        if (!seen.insert(static_cast<std::uint64_t>(id)).second) {
            fail(ErrorKind::parse, fmt::format("{}: duplicate tile_id {}", where, id));
        }
        reps.tile_ids.push_back(static_cast<std::uint64_t>(id));
        for (std::size_t j = 0; j < width; ++j) {
            reps.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = io::parse_double(row[j + 1], where);
        }
    }
    return reps;
}

RepresentationMatrix import_external_features(const std::filesystem::path& path) {
    return parse_representations_csv(io::read_text(path), path.string());
}

AlignedRepresentations align_to_tiles(const RepresentationMatrix& reps, const raster::TileSet& tiles) {
    std::map<std::uint64_t, Eigen::Index> row_of;
    for (std::size_t i = 0; i < reps.tile_ids.size(); ++i) {
        row_of[reps.tile_ids[i]] = static_cast<Eigen::Index>(i);
    }
    AlignedRepresentations out;
    std::set<std::uint64_t> store_ids;
    std::vector<Eigen::Index> rows;
    for (const auto& t : tiles.tiles) {
        store_ids.insert(t.id);
        const auto it = row_of.find(t.id);
        if (it == row_of.end()) {
            out.missing_features.push_back(t.id);
        } else {
            out.matrix.tile_ids.push_back(t.id);
            rows.push_back(it->second);
        }
    }
    for (auto id : reps.tile_ids) {
        if (!store_ids.contains(id)) {
            out.unknown_tiles.push_back(id);
        }
    }
    out.matrix.values.resize(static_cast<Eigen::Index>(rows.size()), reps.values.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.matrix.values.row(static_cast<Eigen::Index>(i)) = reps.values.row(rows[i]);
    }
    return out;
}

}  // namespace terrembed::encoder

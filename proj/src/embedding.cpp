#include "terrembed/embedding.hpp"

#include "terrembed/error.hpp"
#include "terrembed/io.hpp"
#include "terrembed/parallel.hpp"
#include "terrembed/tensor_file.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace terrembed::embedding {

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
    require(x.rows() >= 1, ErrorKind::dimension, "standardizer: no rows");
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.sd.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - s.mean(j)).square().mean();
        const double sd = std::sqrt(var);
        s.sd(j) = sd < 1e-12 ? 1.0 : sd;
    }
    return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
    require(x.cols() == mean.size(), ErrorKind::dimension,
            fmt::format("standardizer: expected {} features, got {}", mean.size(), x.cols()));
    Eigen::MatrixXd out = x.rowwise() - mean.transpose();
    out.array().rowwise() /= sd.transpose().array();
    return out;
}

Eigen::MatrixXd PcaModel::project(const Eigen::MatrixXd& standardized) const {
    require(standardized.cols() == components.cols(), ErrorKind::dimension,
            fmt::format("pca: expected {} features, got {}", components.cols(), standardized.cols()));
    return standardized * components.transpose();
}

double PcaModel::cumulative_ratio(std::size_t k) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < k && i < static_cast<std::size_t>(all_variances.size()); ++i) {
        acc += all_variances(static_cast<Eigen::Index>(i));
    }
    return acc / total_variance;
}

PcaModel fit_pca(const Eigen::MatrixXd& x, double variance_target) {
    require(x.rows() >= 2, ErrorKind::configuration, "pca: need at least two rows");
    require(variance_target > 0.0 && variance_target <= 1.0, ErrorKind::configuration,
            "pca: variance target must lie in (0, 1]");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    const Eigen::VectorXd singular = svd.singularValues();
    const double dof = static_cast<double>(x.rows() - 1);
    PcaModel model;
    model.all_variances = singular.array().square() / dof;
    model.total_variance = model.all_variances.sum();
    require(model.total_variance > 0.0, ErrorKind::degenerate, "pca: input has zero total variance");
    std::size_t keep = static_cast<std::size_t>(singular.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < singular.size(); ++i) {
        acc += model.all_variances(i);
        if (acc / model.total_variance >= variance_target) {
            keep = static_cast<std::size_t>(i + 1);
            break;
        }
    }
    model.n_components = keep;
    model.components = svd.matrixV().leftCols(static_cast<Eigen::Index>(keep)).transpose();
    for (Eigen::Index r = 0; r < model.components.rows(); ++r) {
        Eigen::Index arg = 0;
        model.components.row(r).cwiseAbs().maxCoeff(&arg);
        if (model.components(r, arg) < 0.0) {
            model.components.row(r) *= -1.0;
        }
    }
    model.explained_variance = model.all_variances.head(static_cast<Eigen::Index>(keep));
    return model;
}

namespace {

double squared_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

// Nearest centroid per point, ties to the lowest index. Returns the inertia.
double assign(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids, std::vector<std::size_t>& labels,
              std::vector<double>& best_sq) {
    const Eigen::Index n = points.rows();
    labels.resize(static_cast<std::size_t>(n));
    best_sq.resize(static_cast<std::size_t>(n));
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
            const double d = squared_distance(points, i, centroids, c);
            if (d < best) {
                best = d;
                arg = static_cast<std::size_t>(c);
            }
        }
        labels[static_cast<std::size_t>(i)] = arg;
        best_sq[static_cast<std::size_t>(i)] = best;
        inertia += best;
    }
    return inertia;
}

}  // namespace

Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& points, std::size_t k, Rng& rng) {
    const Eigen::Index n = points.rows();
    require(static_cast<std::size_t>(n) >= k, ErrorKind::configuration,
            fmt::format("kmeans: {} rows are fewer than K = {}", n, k));
    Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), points.cols());
    const auto first = rng.uniform_int(0, n - 1);
    centroids.row(0) = points.row(first);
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        d2[static_cast<std::size_t>(i)] = squared_distance(points, i, centroids, 0);
    }
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) {
            total += v;
        }
        require(total > 0.0, ErrorKind::configuration,
                fmt::format("kmeans: fewer than K = {} distinct points", k));
        const auto pick = static_cast<Eigen::Index>(rng.weighted_index(d2));
        centroids.row(static_cast<Eigen::Index>(c)) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            d2[static_cast<std::size_t>(i)] =
                std::min(d2[static_cast<std::size_t>(i)], squared_distance(points, i, centroids, static_cast<Eigen::Index>(c)));
        }
    }
    return centroids;
}

LloydResult lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centroids, const KMeansOptions& options) {
    require(centroids.cols() == points.cols(), ErrorKind::dimension, "kmeans: centroid width mismatch");
    const Eigen::Index k = centroids.rows();
    LloydResult result;
    std::vector<double> best_sq;
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        result.inertia_history.push_back(assign(points, centroids, result.labels, best_sq));
        Eigen::MatrixXd updated = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            const auto c = result.labels[static_cast<std::size_t>(i)];
            updated.row(static_cast<Eigen::Index>(c)) += points.row(i);
            ++counts[c];
        }
        std::vector<bool> taken(static_cast<std::size_t>(points.rows()), false);
        for (Eigen::Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                updated.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            double far = -1.0;
            Eigen::Index arg = 0;
            for (Eigen::Index i = 0; i < points.rows(); ++i) {
                if (!taken[static_cast<std::size_t>(i)] && best_sq[static_cast<std::size_t>(i)] > far) {
                    far = best_sq[static_cast<std::size_t>(i)];
                    arg = i;
                }
            }
            taken[static_cast<std::size_t>(arg)] = true;
            updated.row(c) = points.row(arg);
        }
        double shift = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) {
            shift = std::max(shift, (updated.row(c) - centroids.row(c)).norm());
        }
        centroids = std::move(updated);
        ++result.iterations;
        if (shift < options.shift_tolerance) {
            break;
        }
    }
    result.model.inertia = assign(points, centroids, result.labels, best_sq);
    result.inertia_history.push_back(result.model.inertia);
    result.model.centroids = std::move(centroids);
    return result;
}

KMeansModel fit_kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, const KMeansOptions& options) {
    require(k >= 2, ErrorKind::configuration, "kmeans: K must be at least 2");
    require(static_cast<std::size_t>(points.rows()) >= k, ErrorKind::configuration,
            fmt::format("kmeans: {} rows are fewer than K = {}", points.rows(), k));
    require(options.restarts >= 1, ErrorKind::configuration, "kmeans: at least one restart is required");
    std::vector<KMeansModel> runs(options.restarts);
    parallel_for(options.restarts, [&](std::size_t r) {
        Rng rng(derive_seed(seed, 0xc1005, r));
        runs[r] = lloyd(points, kmeans_plus_plus(points, k, rng), options).model;
    });
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (runs[r].inertia < runs[best].inertia) {
            best = r;
        }
    }
    return runs[best];
}

Pipeline fit_pipeline(const Eigen::MatrixXd& train_reps, std::size_t k, std::uint64_t seed, const KMeansOptions& options,
                      double variance_target) {
    require(k >= 2, ErrorKind::configuration, "pipeline: K must be at least 2");
    require(static_cast<std::size_t>(train_reps.rows()) >= std::max<std::size_t>(k, 2), ErrorKind::configuration,
            fmt::format("pipeline: {} training rows are fewer than K = {}", train_reps.rows(), k));
    Pipeline p;
    p.standardizer = Standardizer::fit(train_reps);
    const Eigen::MatrixXd standardized = p.standardizer.apply(train_reps);
    p.pca = fit_pca(standardized, variance_target);
    p.kmeans = fit_kmeans(p.pca.project(standardized), k, seed, options);
    return p;
}

Eigen::MatrixXd pca_points(const Eigen::MatrixXd& reps, const Pipeline& pipeline) {
    return pipeline.pca.project(pipeline.standardizer.apply(reps));
}

std::vector<TileEmbedding> distance_embeddings(const std::vector<std::uint64_t>& ids, const Eigen::MatrixXd& points,
                                               const Eigen::MatrixXd& centroids) {
    require(static_cast<Eigen::Index>(ids.size()) == points.rows(), ErrorKind::dimension, "embedding: id count mismatch");
    require(points.cols() == centroids.cols(), ErrorKind::dimension, "embedding: centroid width mismatch");
    std::vector<TileEmbedding> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto& e = out[i];
        e.tile_id = ids[i];
        e.distances.resize(static_cast<std::size_t>(centroids.rows()));
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
            const double d = (points.row(static_cast<Eigen::Index>(i)) - centroids.row(c)).norm();
            e.distances[static_cast<std::size_t>(c)] = d;
            if (d < best) {
                best = d;
                e.cluster = static_cast<std::size_t>(c);
            }
        }
    }
    return out;
}

std::vector<TileEmbedding> transform(const encoder::RepresentationMatrix& reps, const Pipeline& pipeline) {
    require(static_cast<std::size_t>(reps.values.cols()) == pipeline.feature_count(), ErrorKind::dimension,
            fmt::format("transform: representations have {} features, pipeline expects {}", reps.values.cols(),
                        pipeline.feature_count()));
    return distance_embeddings(reps.tile_ids, pca_points(reps.values, pipeline), pipeline.kmeans.centroids);
}

double silhouette(const Eigen::MatrixXd& points, const std::vector<std::size_t>& labels) {
    const auto n = static_cast<std::size_t>(points.rows());
    require(labels.size() == n, ErrorKind::dimension, "silhouette: label count mismatch");
    std::map<std::size_t, std::size_t> sizes;
    for (auto l : labels) {
        ++sizes[l];
    }
    require(sizes.size() >= 2, ErrorKind::degenerate, "silhouette: undefined for fewer than two clusters");
    std::vector<std::size_t> dense_label(n);
    std::map<std::size_t, std::size_t> remap;
    for (const auto& [label, count] : sizes) {
        remap.emplace(label, remap.size());
    }
    std::vector<std::size_t> cluster_size(sizes.size());
    for (std::size_t i = 0; i < n; ++i) {
        dense_label[i] = remap[labels[i]];
        ++cluster_size[dense_label[i]];
    }
    double total = 0.0;
    std::vector<double> sums(sizes.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                sums[dense_label[j]] += (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm();
            }
        }
        const auto own = dense_label[i];
        if (cluster_size[own] <= 1) {
            continue;
        }
        const double a = sums[own] / static_cast<double>(cluster_size[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < sums.size(); ++c) {
            if (c != own) {
                b = std::min(b, sums[c] / static_cast<double>(cluster_size[c]));
            }
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) {
            total += (b - a) / denom;
        }
    }
    return total / static_cast<double>(n);
}

std::string format_embeddings_csv(const std::vector<TileEmbedding>& embeddings) {
    const std::size_t k = embeddings.empty() ? 0 : embeddings.front().distances.size();
    std::string out = "tile_id,cluster";
    for (std::size_t j = 0; j < k; ++j) {
        out += fmt::format(",d{}", j);
    }
    out += '\n';
    for (const auto& e : embeddings) {
        require(e.distances.size() == k, ErrorKind::dimension, "embedding csv: mixed K");
        out += fmt::format("{},{}", e.tile_id, e.cluster);
        for (double d : e.distances) {
            out += ',';
            out += io::format_double(d);
        }
        out += '\n';
    }
    return out;
}

std::vector<TileEmbedding> parse_embeddings_csv(const std::string& text, const std::string& context) {
    const auto table = io::parse_csv(text, context);
    require(table.header.size() >= 2 && table.header[0] == "tile_id" && table.header[1] == "cluster", ErrorKind::parse,
            fmt::format("{}: header must start with tile_id,cluster", context));
    const std::size_t k = table.header.size() - 2;
    std::vector<TileEmbedding> out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto where = fmt::format("{} line {}", context, table.line_numbers[i]);
        require(row.size() == k + 2, ErrorKind::parse, fmt::format("{}: expected {} cells", where, k + 2));
        TileEmbedding e;
        e.tile_id = static_cast<std::uint64_t>(io::parse_int(row[0], where));
        e.cluster = static_cast<std::size_t>(io::parse_int(row[1], where));
        for (std::size_t j = 0; j < k; ++j) {
            e.distances.push_back(io::parse_double(row[j + 2], where));
        }
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

const TensorFileFormat kPipelineFormat{"DRPP", 1, ElementType::f64};

NamedTensor vector_tensor(std::string name, const Eigen::VectorXd& v) {
    return {std::move(name), {static_cast<std::uint32_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
}

NamedTensor matrix_tensor(std::string name, const Eigen::MatrixXd& m) {
    NamedTensor t{std::move(name), {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
    t.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            t.data.push_back(m(r, c));
        }
    }
    return t;
}

Eigen::VectorXd to_vector(const NamedTensor& t) {
    require(t.shape.size() == 1, ErrorKind::format, fmt::format("pipeline file: {} should be rank 1", t.name));
    return Eigen::Map<const Eigen::VectorXd>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

Eigen::MatrixXd to_matrix(const NamedTensor& t) {
    require(t.shape.size() == 2, ErrorKind::format, fmt::format("pipeline file: {} should be rank 2", t.name));
    Eigen::MatrixXd m(t.shape[0], t.shape[1]);
    for (std::uint32_t r = 0; r < t.shape[0]; ++r) {
        for (std::uint32_t c = 0; c < t.shape[1]; ++c) {
            m(r, c) = t.data[static_cast<std::size_t>(r) * t.shape[1] + c];
        }
    }
    return m;
}

}  // namespace

std::vector<std::uint8_t> encode_pipeline(const Pipeline& p) {
    std::vector<NamedTensor> tensors;
    tensors.push_back(vector_tensor("standardizer.mean", p.standardizer.mean));
    tensors.push_back(vector_tensor("standardizer.sd", p.standardizer.sd));
    tensors.push_back(matrix_tensor("pca.components", p.pca.components));
    tensors.push_back(vector_tensor("pca.all_variances", p.pca.all_variances));
    tensors.push_back(vector_tensor("pca.total_variance", Eigen::VectorXd::Constant(1, p.pca.total_variance)));
    tensors.push_back(matrix_tensor("kmeans.centroids", p.kmeans.centroids));
    tensors.push_back(vector_tensor("kmeans.inertia", Eigen::VectorXd::Constant(1, p.kmeans.inertia)));
    return encode_tensors(kPipelineFormat, tensors);
}

Pipeline decode_pipeline(const std::vector<std::uint8_t>& bytes) {
    const auto tensors = decode_tensors(kPipelineFormat, bytes, "pipeline file");
    static constexpr std::string_view names[] = {"standardizer.mean", "standardizer.sd", "pca.components",
                                                 "pca.all_variances", "pca.total_variance", "kmeans.centroids",
                                                 "kmeans.inertia"};
    require(tensors.size() == std::size(names), ErrorKind::format, "pipeline file: unexpected tensor count");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        require(tensors[i].name == names[i], ErrorKind::format,
                fmt::format("pipeline file: expected {} at position {}", names[i], i));
    }
    Pipeline p;
    p.standardizer.mean = to_vector(tensors[0]);
    p.standardizer.sd = to_vector(tensors[1]);
    p.pca.components = to_matrix(tensors[2]);
    p.pca.n_components = static_cast<std::size_t>(p.pca.components.rows());
    p.pca.all_variances = to_vector(tensors[3]);
    p.pca.total_variance = to_vector(tensors[4])(0);
    p.pca.explained_variance = p.pca.all_variances.head(p.pca.components.rows());
    p.kmeans.centroids = to_matrix(tensors[5]);
    p.kmeans.inertia = to_vector(tensors[6])(0);
    require(p.standardizer.mean.size() == p.standardizer.sd.size() &&
                p.pca.components.cols() == p.standardizer.mean.size() &&
                p.kmeans.centroids.cols() == p.pca.components.rows(),
            ErrorKind::format, "pipeline file: inconsistent shapes");
    return p;
}

void save_pipeline(const Pipeline& pipeline, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_pipeline(pipeline));
}

Pipeline load_pipeline(const std::filesystem::path& path) { return decode_pipeline(io::read_file(path)); }

}  // namespace terrembed::embedding

#pragma once

#include "terrembed/encoder.hpp"
#include "terrembed/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace terrembed::embedding {

/// Per-feature z-scoring fitted on training rows (population sd). Features
/// with sd < 1e-12 keep sd = 1.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;

    static Standardizer fit(const Eigen::MatrixXd& x);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

struct PcaModel {
    std::size_t n_components = 0;
    Eigen::MatrixXd components;          // n_components x features, orthonormal rows
    Eigen::VectorXd explained_variance;  // per kept component (sample variance, n-1)
    Eigen::VectorXd all_variances;       // every singular direction, descending
    double total_variance = 0.0;

    Eigen::MatrixXd project(const Eigen::MatrixXd& standardized) const;
    double cumulative_ratio(std::size_t k) const;
};

/// SVD of the (already centred) standardized matrix; keeps the minimal
/// number of components whose cumulative explained-variance ratio reaches
/// `variance_target`. Component signs are fixed so the largest-magnitude
/// loading of each component is positive.
PcaModel fit_pca(const Eigen::MatrixXd& standardized, double variance_target = 0.99);

struct KMeansOptions {
    std::size_t restarts = 10;
    std::size_t max_iterations = 300;
    double shift_tolerance = 1e-6;
};

struct KMeansModel {
    Eigen::MatrixXd centroids;  // K x dims
    double inertia = 0.0;

    std::size_t k() const { return static_cast<std::size_t>(centroids.rows()); }
};

struct LloydResult {
    KMeansModel model;
    std::vector<std::size_t> labels;
    std::vector<double> inertia_history;  // inertia after each assignment step
    std::size_t iterations = 0;
};

/// k-means++ seeding (D^2 sampling).
Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& points, std::size_t k, Rng& rng);

/// Lloyd iterations from the given centroids until the largest centroid
/// shift drops below tolerance or the iteration cap is hit. An emptied
/// cluster is moved onto the point farthest from its current centroid.
LloydResult lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centroids, const KMeansOptions& options);

/// Best of `restarts` seeded k-means++ / Lloyd runs by inertia.
KMeansModel fit_kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                       const KMeansOptions& options = {});

struct Pipeline {
    Standardizer standardizer;
    PcaModel pca;
    KMeansModel kmeans;

    std::size_t feature_count() const { return static_cast<std::size_t>(standardizer.mean.size()); }
    std::size_t k() const { return kmeans.k(); }
};

inline constexpr std::size_t kDefaultSizes[] = {4, 8, 16, 32, 64, 128, 256, 512};

Pipeline fit_pipeline(const Eigen::MatrixXd& train_reps, std::size_t k, std::uint64_t seed,
                      const KMeansOptions& options = {}, double variance_target = 0.99);

struct TileEmbedding {
    std::uint64_t tile_id = 0;
    std::size_t cluster = 0;           // argmin distance, ties to the lowest index
    std::vector<double> distances;     // Euclidean distance to each centroid in PCA space
};

/// Standardize -> project -> distance to each centroid.
std::vector<TileEmbedding> transform(const encoder::RepresentationMatrix& reps, const Pipeline& pipeline);

/// Points in PCA space (standardize + project), one row per input row.
Eigen::MatrixXd pca_points(const Eigen::MatrixXd& reps, const Pipeline& pipeline);

std::vector<TileEmbedding> distance_embeddings(const std::vector<std::uint64_t>& ids, const Eigen::MatrixXd& points,
                                               const Eigen::MatrixXd& centroids);

/// Mean silhouette; singleton clusters score 0, and a point with
/// max(a, b) = 0 scores 0.
double silhouette(const Eigen::MatrixXd& points, const std::vector<std::size_t>& labels);

std::string format_embeddings_csv(const std::vector<TileEmbedding>& embeddings);
std::vector<TileEmbedding> parse_embeddings_csv(const std::string& text, const std::string& context);

/// "DRPP" named-tensor file (f64 payload) holding the standardizer, PCA and centroids.
std::vector<std::uint8_t> encode_pipeline(const Pipeline& pipeline);
Pipeline decode_pipeline(const std::vector<std::uint8_t>& bytes);
void save_pipeline(const Pipeline& pipeline, const std::filesystem::path& path);
Pipeline load_pipeline(const std::filesystem::path& path);

}  // namespace terrembed::embedding

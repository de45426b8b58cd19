#include "terrembed/embedding.hpp"
#include "terrembed/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace terrembed;
using namespace terrembed::embedding;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x(i) = rng.normal();
    }
    return x;
}

// Cyclic Jacobi eigensolver for a symmetric matrix; eigenvalues descending.
std::pair<std::vector<double>, std::vector<std::vector<double>>> jacobi_eigen(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        v[i][i] = 1.0;
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                off += a[p][q] * a[p][q];
            }
        }
        if (off < 1e-30) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) {
                    continue;
                }
                const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p];
                    const double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k];
                    const double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p];
                    const double vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i][i] > a[j][j]; });
    std::vector<double> values;
    std::vector<std::vector<double>> vectors;
    for (auto i : order) {
        values.push_back(a[i][i]);
        std::vector<double> col(n);
        for (std::size_t k = 0; k < n; ++k) {
            col[k] = v[k][i];
        }
        vectors.push_back(col);
    }
    return {values, vectors};
}

double oracle_silhouette(const std::vector<std::vector<double>>& pts, const std::vector<std::size_t>& labels) {
    const std::size_t n = pts.size();
    const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(k, 0.0);
        std::vector<std::size_t> count(k, 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                continue;
            }
            double d = 0.0;
            for (std::size_t c = 0; c < pts[i].size(); ++c) {
                d += (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]);
            }
            sum[labels[j]] += std::sqrt(d);
            ++count[labels[j]];
        }
        if (count[labels[i]] == 0) {
            continue;
        }
        const double a = sum[labels[i]] / static_cast<double>(count[labels[i]]);
        double b = INFINITY;
        for (std::size_t c = 0; c < k; ++c) {
            if (c != labels[i] && count[c] > 0) {
                b = std::min(b, sum[c] / static_cast<double>(count[c]));
            }
        }
        const double m = std::max(a, b);
        total += m == 0.0 ? 0.0 : (b - a) / m;
    }
    return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("standardizer uses population sd and keeps constant columns finite") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 5, 2, 5, 3, 5, 4, 5;
    const auto s = Standardizer::fit(x);
    CHECK(s.mean(0) == doctest::Approx(2.5));
    CHECK(s.sd(0) == doctest::Approx(std::sqrt(1.25)));
    CHECK(s.sd(1) == 1.0);
    const auto z = s.apply(x);
    CHECK(z.col(1).isZero());
    CHECK(z.col(0).mean() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("perfectly correlated features collapse to one component") {
    Eigen::MatrixXd x(50, 2);
    const auto g = gaussian(50, 1, 3);
    x.col(0) = g.col(0);
    x.col(1) = 3.0 * g.col(0).array() + 7.0;
    const auto pca = fit_pca(Standardizer::fit(x).apply(x));
    CHECK(pca.n_components == 1);
}

TEST_CASE("PCA components match a Jacobi eigendecomposition of the correlation matrix") {
    Eigen::MatrixXd x = gaussian(400, 2, 11);
    x.col(0) *= 2.0;
    x.col(1) += 0.5 * x.col(0);  // some correlation so directions are well defined
    const auto z = Standardizer::fit(x).apply(x);
    const auto pca = fit_pca(z, 1.0);
    REQUIRE(pca.n_components == 2);
    const Eigen::MatrixXd cov = z.transpose() * z / static_cast<double>(z.rows() - 1);
    const auto [values, vectors] = jacobi_eigen({{cov(0, 0), cov(0, 1)}, {cov(1, 0), cov(1, 1)}});
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(pca.explained_variance(static_cast<Eigen::Index>(c)) == doctest::Approx(values[c]).epsilon(1e-9));
        const double dot = pca.components(static_cast<Eigen::Index>(c), 0) * vectors[c][0] +
                           pca.components(static_cast<Eigen::Index>(c), 1) * vectors[c][1];
        CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("PCA keeps the minimal component count and reconstructs at full rank") {
    const auto x = gaussian(200, 16, 21);
    const auto z = Standardizer::fit(x).apply(x);
    const auto pca = fit_pca(z, 0.99);
    CHECK(pca.cumulative_ratio(pca.n_components) >= 0.99);
    CHECK(pca.cumulative_ratio(pca.n_components - 1) < 0.99);
    const auto full = fit_pca(z, 1.0);
    const Eigen::MatrixXd recon = full.project(z) * full.components;
    CHECK((recon - z).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(fit_pca(Eigen::MatrixXd::Zero(5, 3)), Error);
}

TEST_CASE("k-means on exactly K distinct points recovers them with zero inertia") {
    Eigen::MatrixXd p(3, 2);
    p << 0, 0, 5, 1, -3, 4;
    const auto m = fit_kmeans(p, 3, 7);
    CHECK(m.inertia == doctest::Approx(0.0));
    for (Eigen::Index i = 0; i < 3; ++i) {
        bool found = false;
        for (Eigen::Index c = 0; c < 3; ++c) {
            found = found || (m.centroids.row(c) - p.row(i)).norm() < 1e-12;
        }
        CHECK(found);
    }
    CHECK_THROWS_AS(fit_kmeans(p, 4, 7), Error);
}

TEST_CASE("Lloyd inertia never increases") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto pts = gaussian(120, 3, 100 + seed);
        Rng rng(seed);
        const auto init = kmeans_plus_plus(pts, 5, rng);
        const auto r = lloyd(pts, init, KMeansOptions{1, 300, 1e-9});
        REQUIRE(r.inertia_history.size() >= 2);
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
            CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-9);
        }
    }
}

TEST_CASE("distance embeddings: zero self-distance, 3-4-5 triangle and lowest-index ties") {
    Eigen::MatrixXd c(4, 2);
    c << 0, 0, 10, 0, 3, 7, -2, 5;
    Eigen::MatrixXd p(1, 2);
    p << 3, 7;
    const auto e = distance_embeddings({1}, p, c);
    CHECK(e[0].distances[2] == 0.0);
    CHECK(e[0].cluster == 2);

    Eigen::MatrixXd c2(2, 2);
    c2 << 0, 0, 3, 4;
    Eigen::MatrixXd origin = Eigen::MatrixXd::Zero(1, 2);
    const auto e2 = distance_embeddings({0}, origin, c2);
    CHECK(e2[0].distances == std::vector<double>{0.0, 5.0});

    Eigen::MatrixXd mid(1, 2);
    mid << 1.5, 2.0;
    const auto tie = distance_embeddings({0}, mid, c2);
    CHECK(tie[0].distances[0] == tie[0].distances[1]);
    CHECK(tie[0].cluster == 0);
}

TEST_CASE("transform agrees with a brute-force distance computation") {
    const auto reps = gaussian(80, 6, 5);
    const auto pipe = fit_pipeline(reps, 4, 9);
    encoder::RepresentationMatrix rm{std::vector<std::uint64_t>(80), reps};
    std::iota(rm.tile_ids.begin(), rm.tile_ids.end(), 0);
    const auto emb = transform(rm, pipe);
    for (Eigen::Index i = 0; i < reps.rows(); ++i) {
        Eigen::VectorXd z = (reps.row(i).transpose() - pipe.standardizer.mean).cwiseQuotient(pipe.standardizer.sd);
        Eigen::VectorXd y = pipe.pca.components * z;
        for (std::size_t k = 0; k < 4; ++k) {
            double d = 0.0;
            for (Eigen::Index j = 0; j < y.size(); ++j) {
                const double diff = y(j) - pipe.kmeans.centroids(static_cast<Eigen::Index>(k), j);
                d += diff * diff;
            }
            CHECK(std::abs(emb[static_cast<std::size_t>(i)].distances[k] - std::sqrt(d)) < 1e-9);
        }
    }
    CHECK_THROWS_AS(transform({{0}, Eigen::MatrixXd::Zero(1, 5)}, pipe), Error);
}

TEST_CASE("fit_pipeline validates its inputs") {
    CHECK_THROWS_AS(fit_pipeline(gaussian(3, 4, 1), 4, 1), Error);
    CHECK_THROWS_AS(fit_pipeline(Eigen::MatrixXd::Constant(10, 3, 2.0), 2, 1), Error);
}

TEST_CASE("silhouette conventions") {
    Eigen::MatrixXd dup(4, 2);
    dup << 0, 0, 0, 0, 100, 100, 100, 100;
    CHECK(silhouette(dup, {0, 0, 1, 1}) == doctest::Approx(1.0));
    const Eigen::MatrixXd same = Eigen::MatrixXd::Zero(4, 2);
    CHECK(silhouette(same, {0, 1, 0, 1}) == 0.0);
    CHECK_THROWS_AS(silhouette(dup, {0, 0, 0, 0}), Error);
}

TEST_CASE("silhouette matches the brute-force oracle") {
    Eigen::MatrixXd six(6, 2);
    six << 0, 0, 1, 0.5, 0.2, 1.1, 4, 4, 5, 3.5, 4.4, 5.2;
    const std::vector<std::size_t> two{0, 0, 0, 1, 1, 1};
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < 6; ++i) {
        rows.push_back({six(i, 0), six(i, 1)});
    }
    CHECK(std::abs(silhouette(six, two) - oracle_silhouette(rows, two)) < 1e-9);

    const auto pts = gaussian(20, 3, 77);
    std::vector<std::size_t> labels(20);
    std::vector<std::vector<double>> prow;
    for (std::size_t i = 0; i < 20; ++i) {
        labels[i] = i % 3;
        prow.push_back({pts(static_cast<Eigen::Index>(i), 0), pts(static_cast<Eigen::Index>(i), 1),
                        pts(static_cast<Eigen::Index>(i), 2)});
    }
    CHECK(std::abs(silhouette(pts, labels) - oracle_silhouette(prow, labels)) < 1e-9);
}

TEST_CASE("embeddings csv and pipeline file round-trip") {
    const std::vector<TileEmbedding> e{{3, 1, {0.5, 0.25}}, {9, 0, {0.1, 2.0 / 3.0}}};
    const auto back = parse_embeddings_csv(format_embeddings_csv(e), "e.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[1].tile_id == 9);
    CHECK(back[1].distances == e[1].distances);
    CHECK(back[0].cluster == 1);

    const auto pipe = fit_pipeline(gaussian(40, 5, 8), 3, 2);
    const auto p2 = decode_pipeline(encode_pipeline(pipe));
    CHECK(p2.standardizer.mean == pipe.standardizer.mean);
    CHECK(p2.pca.components == pipe.pca.components);
    CHECK(p2.kmeans.centroids == pipe.kmeans.centroids);
    CHECK(p2.pca.n_components == pipe.pca.n_components);
}

TEST_CASE("fit_kmeans is deterministic for a seed") {
    const auto pts = gaussian(60, 2, 4);
    CHECK(fit_kmeans(pts, 4, 5).centroids == fit_kmeans(pts, 4, 5).centroids);
}

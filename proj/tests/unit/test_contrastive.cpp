#include "terrembed/contrastive.hpp"
#include "terrembed/error.hpp"
#include "terrembed/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace terrembed;
using namespace terrembed::contrastive;

namespace {

// Brute-force loss: every anchor against every other row, partner is i xor 1.
double oracle_loss(const Eigen::MatrixXd& z, double tau) {
    const auto n = z.rows();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double denom = 0.0;
        double positive = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) {
                continue;
            }
            const double sim = z.row(i).dot(z.row(k)) / (z.row(i).norm() * z.row(k).norm());
            denom += std::exp(sim / tau);
            if (k == (i ^ 1)) {
                positive = std::exp(sim / tau);
            }
        }
        total += -std::log(positive / denom);
    }
    return total / static_cast<double>(n);
}

Eigen::MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd z(rows, cols);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        z(i) = rng.normal();
    }
    return z;
}

raster::TileSet random_tiles(std::size_t count, std::uint32_t side, std::uint64_t seed) {
    Rng rng(seed);
    raster::TileSet set;
    set.side = side;
    for (std::size_t i = 0; i < count; ++i) {
        raster::Tile t{i, side, std::vector<float>(side * side), 0.0, 0.0};
        for (auto& v : t.elevations) {
            v = static_cast<float>(std::max(0.0, rng.normal(2.0, 2.0)));
        }
        set.tiles.push_back(std::move(t));
    }
    return set;
}

encoder::EncoderConfig tiny_encoder() {
    encoder::EncoderConfig c;
    c.input_side = 8;
    c.stages = {{4, 3, 2}, {6, 3, 2}};
    c.head_width = 8;
    c.projection_dim = 8;
    return c;
}

}  // namespace

TEST_CASE("single pair has no negatives and zero loss") {
    const auto r = nt_xent(random_batch(2, 4, 1), 0.5);
    CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("two orthonormal pairs at temperature one") {
    Eigen::MatrixXd z(4, 2);
    z << 1, 0, 1, 0, 0, 1, 0, 1;
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
    CHECK(expected == doctest::Approx(0.5514).epsilon(1e-4));
    CHECK(nt_xent(z, 1.0).loss == doctest::Approx(oracle_loss(z, 1.0)).epsilon(1e-12));
    CHECK(nt_xent(z, 1.0).loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss matches the brute-force oracle and ignores vector scale") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto z = random_batch(8, 6, seed);
        CHECK(nt_xent(z, 0.5).loss == doctest::Approx(oracle_loss(z, 0.5)).epsilon(1e-12));
        CHECK(nt_xent(3.0 * z, 0.5).loss == doctest::Approx(nt_xent(z, 0.5).loss).epsilon(1e-12));
    }
}

TEST_CASE("loss gradient matches central finite differences") {
    auto z = random_batch(8, 8, 42);
    const auto r = nt_xent(z, 0.5);
    double worst = 0.0;
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        Eigen::MatrixXd p = z;
        Eigen::MatrixXd m = z;
        p(i) += h;
        m(i) -= h;
        const double numeric = (oracle_loss(p, 0.5) - oracle_loss(m, 0.5)) / (2 * h);
        const double scale = std::max({std::abs(numeric), std::abs(r.gradient(i)), 1e-6});
        worst = std::max(worst, std::abs(numeric - r.gradient(i)) / scale);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("degenerate inputs are rejected") {
    Eigen::MatrixXd z = random_batch(4, 3, 2);
    z.row(1).setZero();
    try {
        nt_xent(z, 0.5);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::degenerate);
    }
    try {
        nt_xent(random_batch(4, 3, 2), 0.0);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::configuration);
    }
}

TEST_CASE("zero epochs returns the initial model unchanged") {
    const auto tiles = random_tiles(8, 8, 1);
    const auto m = encoder::EncoderModel::initialize(tiny_encoder(), 2);
    ContrastiveConfig cfg;
    cfg.epochs = 0;
    cfg.batch_pairs = 4;
    const auto r = train_simclr(tiles, m, augment::AugmentSpec{}, cfg);
    CHECK(r.model == m);
    CHECK(r.epoch_loss.empty());
}

TEST_CASE("training is deterministic and changes the weights") {
    const auto tiles = random_tiles(16, 8, 3);
    const auto m = encoder::EncoderModel::initialize(tiny_encoder(), 2);
    ContrastiveConfig cfg;
    cfg.epochs = 3;
    cfg.batch_pairs = 4;
    cfg.learning_rate = 1e-2;
    const auto a = train_simclr(tiles, m, augment::AugmentSpec{}, cfg);
    const auto b = train_simclr(tiles, m, augment::AugmentSpec{}, cfg);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.model == b.model);
    CHECK_FALSE(a.model == m);
    CHECK(a.epoch_loss.size() == 3);
    for (double l : a.epoch_loss) {
        CHECK(std::isfinite(l));
    }
}

TEST_CASE("representations are keyed by tile id with the tap width") {
    auto tiles = random_tiles(5, 8, 9);
    tiles.tiles.push_back(tiles.tiles[2]);
    tiles.tiles.back().id = 99;
    const auto m = encoder::EncoderModel::initialize(tiny_encoder(), 4);
    const auto reps = extract_representations(m, tiles, encoder::LayerTap::l1, 2);
    CHECK(reps.values.rows() == 6);
    CHECK(reps.values.cols() == 8);
    CHECK(reps.tile_ids.back() == 99);
    CHECK(reps.values.row(2) == reps.values.row(5));
    const auto back = extract_representations(m, tiles, encoder::LayerTap::backbone, 4);
    CHECK(back.values.cols() == 6);
}

TEST_CASE("loss trace csv lists one row per epoch") {
    const auto csv = format_loss_trace_csv({1.5, 1.25});
    CHECK(csv.find("epoch") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

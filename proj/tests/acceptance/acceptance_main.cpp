// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include "terrembed/config.hpp"
#include "terrembed/contrastive.hpp"
#include "terrembed/embedding.hpp"
#include "terrembed/encoder.hpp"
#include "terrembed/error.hpp"
#include "terrembed/experiment.hpp"
#include "terrembed/io.hpp"
#include "terrembed/raster.hpp"
#include "terrembed/regress.hpp"
#include "terrembed/rng.hpp"
#include "terrembed/workflow.hpp"

#include <Eigen/Cholesky>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

using namespace terrembed;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x(i) = rng.normal();
    }
    return x;
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "terrembed_acceptance" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::map<std::string, std::string> digests(const fs::path& dir, const std::string& suffix) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) {
        return out;
    }
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            out[name] = io::file_sha256(e.path());
        }
    }
    return out;
}

config::RunConfig quiet(config::RunConfig c) {
    c.log_level = "warn";
    return c;
}

// ---------------------------------------------------------------- 1

Outcome gradient_oracles() {
    const auto t0 = Clock::now();
    const double h = 1e-6;

    // NT-Xent alone: N = 4 pairs of 8-dimensional vectors.
    const auto z = gaussian(8, 8, 101);
    const auto loss = contrastive::nt_xent(z, 0.5);
    double worst_loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        Eigen::MatrixXd p = z;
        Eigen::MatrixXd m = z;
        p(i) += h;
        m(i) -= h;
        const double numeric = (contrastive::nt_xent(p, 0.5).loss - contrastive::nt_xent(m, 0.5).loss) / (2 * h);
        worst_loss = std::max(worst_loss, relative_error(loss.gradient(i), numeric));
    }

    // Encoder with two conv stages and an 8-wide head, differentiated through the loss.
    encoder::EncoderConfig cfg;
    cfg.input_side = 8;
    cfg.stages = {{4, 3, 2}, {6, 3, 1}};
    cfg.head_width = 8;
    cfg.projection_dim = 8;
    auto params = encoder::EncoderModel::initialize(cfg, 7).parameters();
    Rng rng(8);
    for (auto& t : params) {
        if (t.shape.size() == 1) {
            for (auto& v : t.data) {
                v = rng.uniform(-0.1, 0.1);
            }
        }
    }
    const auto model = encoder::EncoderModel::from_parameters(cfg, params);
    std::vector<raster::Tile> batch;
    for (std::uint64_t i = 0; i < 8; ++i) {
        raster::Tile t{i, 8, std::vector<float>(64), 0.0, 0.0};
        for (auto& v : t.elevations) {
            v = static_cast<float>(rng.uniform(0.0, 4.0));
        }
        batch.push_back(std::move(t));
    }
    auto objective = [&](const std::vector<NamedTensor>& p) {
        const auto m = encoder::EncoderModel::from_parameters(cfg, p);
        return contrastive::nt_xent(m.forward(batch, encoder::LayerTap::projection), 0.5).loss;
    };
    const auto trace = encoder::forward_trace(model, batch, encoder::LayerTap::projection);
    const auto upstream = contrastive::nt_xent(trace.output(), 0.5).gradient;
    const auto grads = encoder::backward(model, trace, upstream);
    double worst_encoder = 0.0;
    std::size_t checked = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t k = 0; k < params[p].data.size(); ++k) {
            auto plus = params;
            auto minus = params;
            plus[p].data[k] += h;
            minus[p].data[k] -= h;
            const double numeric = (objective(plus) - objective(minus)) / (2 * h);
            worst_encoder = std::max(worst_encoder, relative_error(grads[p].data[k], numeric));
            ++checked;
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst_loss < 1e-4 && worst_encoder < 1e-4 && elapsed < 30.0,
            fmt::format("nt-xent max rel err {:.2e}, encoder max rel err {:.2e} over {} parameters, {:.1f} s",
                        worst_loss, worst_encoder, checked, elapsed)};
}

// ---------------------------------------------------------------- 2

Outcome pca_properties() {
    const auto x = gaussian(200, 16, 202);
    const auto z = embedding::Standardizer::fit(x).apply(x);
    const auto pca = embedding::fit_pca(z, 0.99);
    const bool minimal = pca.cumulative_ratio(pca.n_components) >= 0.99 &&
                         pca.cumulative_ratio(pca.n_components - 1) < 0.99;
    const auto full = embedding::fit_pca(z, 1.0);
    const Eigen::MatrixXd recon = full.project(z) * full.components;
    const double err = (recon - z).cwiseAbs().maxCoeff();
    return {minimal && err < 1e-6,
            fmt::format("n_components {} (ratio {:.5f}, previous {:.5f}), full-rank reconstruction error {:.2e}",
                        pca.n_components, pca.cumulative_ratio(pca.n_components),
                        pca.cumulative_ratio(pca.n_components - 1), err)};
}

// ---------------------------------------------------------------- 3

Outcome kmeans_properties() {
    bool monotone = true;
    double worst_distance = 0.0;
    std::size_t steps = 0;
    for (std::uint64_t d = 0; d < 10; ++d) {
        const auto pts = gaussian(150, 4, 300 + d);
        Rng rng(d);
        const auto init = embedding::kmeans_plus_plus(pts, 6, rng);
        const auto r = embedding::lloyd(pts, init, {1, 300, 1e-10});
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
            monotone = monotone && r.inertia_history[i] <= r.inertia_history[i - 1];
            ++steps;
        }
        std::vector<std::uint64_t> ids(150);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            ids[i] = i;
        }
        const auto emb = embedding::distance_embeddings(ids, pts, r.model.centroids);
        for (std::size_t i = 0; i < emb.size(); ++i) {
            for (Eigen::Index c = 0; c < r.model.centroids.rows(); ++c) {
                double s = 0.0;
                for (Eigen::Index j = 0; j < pts.cols(); ++j) {
                    const double diff = pts(static_cast<Eigen::Index>(i), j) - r.model.centroids(c, j);
                    s += diff * diff;
                }
                worst_distance =
                    std::max(worst_distance, std::abs(std::sqrt(s) - emb[i].distances[static_cast<std::size_t>(c)]));
            }
        }
    }
    return {monotone && worst_distance < 1e-9,
            fmt::format("inertia non-increasing over {} Lloyd steps: {}, max distance deviation {:.2e}", steps,
                        monotone ? "yes" : "no", worst_distance)};
}

// ---------------------------------------------------------------- 4

Outcome lasso_properties() {
    const auto x = gaussian(100, 5, 404);
    Eigen::VectorXd beta(5);
    beta << 2.0, -1.0, 0.5, 1.5, -3.0;
    const Eigen::VectorXd y = (x * beta).array() + 1.0 + 0.2 * gaussian(100, 1, 405).col(0).array();
    regress::LassoOptions tight;
    tight.tolerance = 1e-12;
    const auto m = regress::fit_lasso_fixed(x, y, 0.0, tight);
    Eigen::MatrixXd design(100, 6);
    design.col(0).setOnes();
    design.rightCols(5) = x;
    const Eigen::VectorXd ols = (design.transpose() * design).ldlt().solve(design.transpose() * y);
    double ols_err = std::abs(m.intercept - ols(0));
    for (Eigen::Index j = 0; j < 5; ++j) {
        ols_err = std::max(ols_err, std::abs(m.coefficients(j) - ols(j + 1)));
    }

    const double amax = regress::lasso_alpha_max(x, y);
    const auto zero = regress::fit_lasso_fixed(x, y, amax);
    const bool all_zero = zero.coefficients.isZero() && std::abs(zero.intercept - y.mean()) < 1e-12;

    Eigen::VectorXd u(8);
    u << -3, -2, -1, -0.5, 0.5, 1, 2, 3;
    u = (u.array() - u.mean()) / std::sqrt((u.array() - u.mean()).square().mean());
    const Eigen::VectorXd v = 2.0 * u;
    double soft_err = 0.0;
    regress::LassoOptions exact;
    exact.tolerance = 1e-14;
    for (double lambda : {0.0, 0.25, 1.0, 1.75, 2.5}) {
        const auto fit = regress::fit_lasso_fixed(u, v, lambda, exact);
        soft_err = std::max(soft_err, std::abs(fit.coefficients(0) - std::max(0.0, 2.0 - lambda)));
    }
    return {ols_err < 1e-4 && all_zero && soft_err < 1e-8,
            fmt::format("OLS deviation {:.2e}, alpha_max all-zero: {}, soft-threshold deviation {:.2e}", ols_err,
                        all_zero ? "yes" : "no", soft_err)};
}

// ---------------------------------------------------------------- 5

Outcome gbm_properties() {
    const auto x = gaussian(200, 4, 505);
    Eigen::VectorXd y = 3.0 * (x.col(0).array() > 0).cast<double>() + x.col(1).array().square();
    y += gaussian(200, 1, 506).col(0);
    const auto xv = gaussian(60, 4, 507);
    Eigen::VectorXd yv = 3.0 * (xv.col(0).array() > 0).cast<double>() + xv.col(1).array().square();
    yv += gaussian(60, 1, 508).col(0);

    regress::GbmParams p;
    p.max_depth = 4;
    p.learning_rate = 0.2;
    p.min_samples_leaf = 3;
    p.subsample = 1.0;
    p.patience = 15;
    p.n_rounds_max = 1000;
    const auto m = regress::fit_gbm_fixed(x, y, xv, yv, p, 5);
    bool monotone = true;
    for (std::size_t r = 1; r < m.train_rmse.size(); ++r) {
        monotone = monotone && m.train_rmse[r] <= m.train_rmse[r - 1];
    }
    const bool halted = m.trees.size() - m.best_iteration <= p.patience && m.trees.size() < p.n_rounds_max;

    // Plateau: constant training targets leave validation loss flat from round 0.
    regress::GbmParams flat = p;
    flat.patience = 12;
    const auto plateau = regress::fit_gbm_fixed(x, Eigen::VectorXd::Constant(200, 4.0), xv, yv, flat, 6);
    const bool plateau_ok = plateau.best_iteration == 0 && plateau.trees.size() == flat.patience;

    const auto full = m.predict(xv);
    const auto truncated = m.predict_with(xv, m.best_iteration);
    const bool exact = (full.array() == truncated.array()).all() &&
                       regress::rmse(full, yv) == m.val_rmse[m.best_iteration];
    return {monotone && halted && plateau_ok && exact,
            fmt::format("train RMSE monotone over {} rounds: {}, stopped {} rounds after best {} (patience {}), "
                        "plateau stop at {} with best {}, truncation bit-exact: {}",
                        m.trees.size(), monotone ? "yes" : "no", m.trees.size() - m.best_iteration, m.best_iteration,
                        p.patience, plateau.trees.size(), plateau.best_iteration, exact ? "yes" : "no")};
}

// ---------------------------------------------------------------- 6

Outcome silhouette_oracle() {
    const auto pts = gaussian(20, 2, 606);
    std::vector<std::size_t> labels(20);
    for (std::size_t i = 0; i < 20; ++i) {
        labels[i] = (i * 7) % 3;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        double sums[3] = {0, 0, 0};
        double counts[3] = {0, 0, 0};
        for (std::size_t j = 0; j < 20; ++j) {
            if (i == j) {
                continue;
            }
            const auto a = static_cast<Eigen::Index>(i);
            const auto b = static_cast<Eigen::Index>(j);
            sums[labels[j]] += std::hypot(pts(a, 0) - pts(b, 0), pts(a, 1) - pts(b, 1));
            counts[labels[j]] += 1;
        }
        if (counts[labels[i]] == 0) {
            continue;
        }
        const double a = sums[labels[i]] / counts[labels[i]];
        double b = INFINITY;
        for (std::size_t c = 0; c < 3; ++c) {
            if (c != labels[i] && counts[c] > 0) {
                b = std::min(b, sums[c] / counts[c]);
            }
        }
        total += std::max(a, b) == 0 ? 0 : (b - a) / std::max(a, b);
    }
    const double oracle = total / 20.0;
    const double got = embedding::silhouette(pts, labels);
    return {std::abs(got - oracle) < 1e-9, fmt::format("silhouette {:.12f} vs oracle {:.12f}", got, oracle)};
}

// ---------------------------------------------------------------- 7

Outcome improvement_arithmetic() {
    const auto a = std::lround(experiment::improvement_pct(11.9, 10.8));
    const auto b = std::lround(experiment::improvement_pct(11.2, 8.9));
    return {a == 9 && b == 21, fmt::format("(11.9, 10.8) -> {}%, (11.2, 8.9) -> {}%", a, b)};
}

// ---------------------------------------------------------------- 8 and 9

struct Benchmark {
    config::RunConfig config;
    workflow::Layout layout;
    bool ran = false;
};

Benchmark g_benchmark;

const std::vector<std::string> kAllDomains = {"income",  "employment", "education", "health",
                                              "crime",   "barriers",   "living_env"};

Outcome synthetic_benchmark() {
    auto cfg = quiet(config::RunConfig{});
    cfg.sizes = {32};
    cfg.poolings = {"mean"};
    cfg.domains = kAllDomains;
    cfg.validate();
    const workflow::Layout layout{scratch("benchmark")};
    const auto t0 = Clock::now();
    workflow::run_all(cfg, layout);
    const double elapsed = seconds_since(t0);
    g_benchmark = {cfg, layout, true};

    const auto tiles = raster::load_tile_store(layout.tile_store());
    const auto csv = io::read_csv(layout.evaluate() / "results.csv");
    const auto col = [&](const char* n) { return csv.column(n); };
    std::map<std::string, double> rmse;  // domain|subset|source|model
    for (const auto& row : csv.rows) {
        if (row[col("test_rmse")].empty()) {
            continue;
        }
        rmse[row[col("domain")] + "|" + row[col("subset")] + "|" + row[col("source")] + "|" + row[col("model")]] =
            io::parse_double(row[col("test_rmse")], "results.csv");
    }
    auto get = [&](const std::string& d, const char* subset, const char* source, const char* model) {
        const auto it = rmse.find(d + "|" + subset + "|" + source + "|" + model);
        return it == rmse.end() ? NAN : it->second;
    };
    std::vector<std::string> winners;
    for (const auto& d : kAllDomains) {
        bool ok = true;
        for (const char* model : {"lasso", "gbm"}) {
            const double demo = get(d, "demographic", "simclr", model);
            const double comb = get(d, "combined", "simclr", model);
            const double sim = get(d, "embedding", "simclr", model);
            const double rnd = get(d, "embedding", "random-encoder", model);
            ok = ok && comb < demo && sim <= 0.95 * rnd;
        }
        if (ok) {
            winners.push_back(d);
        }
    }
    const auto loss = io::read_csv(layout.train() / "loss.csv");
    const double first = io::parse_double(loss.rows.front().at(1), "loss.csv");
    const double last = io::parse_double(loss.rows.back().at(1), "loss.csv");
    const bool sized = tiles.tiles.size() == 1024 && tiles.side == 64;
    std::string names;
    for (const auto& w : winners) {
        names += (names.empty() ? "" : ",") + w;
    }
    return {!winners.empty() && sized && elapsed <= 900.0,
            fmt::format("{} tiles of side {}, {:.0f} s, loss {:.4f} -> {:.4f}, indices meeting both conditions "
                        "for both models: [{}]",
                        tiles.tiles.size(), tiles.side, elapsed, first, last, names)};
}

Outcome pooling_grid() {
    if (!g_benchmark.ran) {
        return {false, "benchmark run unavailable"};
    }
    auto cfg = g_benchmark.config;
    cfg.sizes = {4, 8, 16, 32};
    cfg.poolings = {"mean", "max"};
    cfg.domains = {"income", "crime", "living_env"};
    cfg.sources = {"simclr-L1"};
    cfg.validate();
    const auto& layout = g_benchmark.layout;
    workflow::run_post(cfg, layout);
    workflow::run_pool(cfg, layout);

    std::size_t areas_checked = 0;
    bool ordered = true;
    for (auto k : cfg.sizes) {
        const auto mean = aggregate::parse_pooled_csv(
            io::read_text(layout.pooled_table(experiment::feature_key("simclr", "L1", k, aggregate::PoolMethod::mean))),
            "mean");
        const auto mx = aggregate::parse_pooled_csv(
            io::read_text(layout.pooled_table(experiment::feature_key("simclr", "L1", k, aggregate::PoolMethod::max))),
            "max");
        for (std::size_t a = 0; a < mean.size(); ++a) {
            if (mean[a].missing()) {
                continue;
            }
            ++areas_checked;
            for (std::size_t j = 0; j < mean[a].vector.size(); ++j) {
                ordered = ordered && mean[a].vector[j] <= mx[a].vector[j];
            }
        }
    }

    const auto rows = workflow::run_evaluate(cfg, layout);
    const std::size_t expected = 3 * 3 * 4 * 2 * 2;
    std::set<std::string> keys;
    std::size_t failed = 0;
    for (const auto& r : rows) {
        keys.insert(fmt::format("{}|{}|{}|{}|{}", r.spec.domain, experiment::to_string(r.spec.subset), r.spec.k,
                                aggregate::to_string(r.spec.pooling), experiment::to_string(r.spec.model)));
        failed += r.failed ? 1 : 0;
    }
    const auto csv = io::read_csv(layout.evaluate() / "results.csv");
    return {ordered && rows.size() == expected && keys.size() == expected && failed == 0 &&
                csv.rows.size() == expected,
            fmt::format("mean <= max on {} area/K pairs: {}, {} rows for {} cells, {} distinct, {} failed",
                        areas_checked, ordered ? "yes" : "no", csv.rows.size(), expected, keys.size(), failed)};
}

// ---------------------------------------------------------------- 10 and 11

config::RunConfig reduced_config() {
    return quiet(config::load_config(TERREMBED_DEMO_CONFIG));
}

fs::path g_reduced_run;

Outcome determinism() {
    const auto cfg = reduced_config();
    const workflow::Layout first{scratch("determinism_a")};
    workflow::run_all(cfg, first);
    g_reduced_run = first.root;

    const auto manifest = nlohmann::json::parse(io::read_text(first.evaluate() / "manifest.json"));
    const auto replay = quiet(config::parse_config(manifest.at("config").get<std::string>(), "manifest"));
    const workflow::Layout second{scratch("determinism_b")};
    workflow::run_all(replay, second);

    const auto emb_a = digests(first.post(), "_embeddings.csv");
    const auto emb_b = digests(second.post(), "_embeddings.csv");
    const auto res_a = io::file_sha256(first.evaluate() / "results.csv");
    const auto res_b = io::file_sha256(second.evaluate() / "results.csv");
    return {!emb_a.empty() && emb_a == emb_b && res_a == res_b,
            fmt::format("{} embedding files identical: {}, results identical: {}", emb_a.size(),
                        emb_a == emb_b ? "yes" : "no", res_a == res_b ? "yes" : "no")};
}

Outcome leakage_guard() {
    if (g_reduced_run.empty()) {
        return {false, "reference run unavailable"};
    }
    const auto cfg = reduced_config();
    const workflow::Layout clean{g_reduced_run};
    const workflow::Layout noisy{scratch("leakage")};
    fs::copy(clean.scene(), noisy.scene(), fs::copy_options::recursive);
    fs::copy(clean.ingest(), noisy.ingest(), fs::copy_options::recursive);

    auto tiles = raster::load_tile_store(noisy.tile_store());
    const auto assignment = raster::parse_assignment_csv(io::read_text(noisy.assignment()));
    const auto plan = experiment::parse_split_json(io::read_text(noisy.split()));
    Rng rng(1111);
    std::size_t replaced = 0;
    for (auto& t : tiles.tiles) {
        const auto area = assignment.find(t.id);
        if (area && plan.split_of(*area) == std::optional<std::string>("test")) {
            for (auto& v : t.elevations) {
                v = static_cast<float>(rng.uniform(0.0, 40.0));
            }
            ++replaced;
        }
    }
    raster::save_tile_store(tiles, noisy.tile_store());

    workflow::run_train(cfg, noisy);
    workflow::run_embed(cfg, noisy);
    workflow::run_post(cfg, noisy);
    workflow::run_pool(cfg, noisy);
    workflow::run_evaluate(cfg, noisy);

    const bool weights = io::file_sha256(clean.weights()) == io::file_sha256(noisy.weights());
    const auto pipes_a = digests(clean.post(), ".pipeline");
    const auto pipes_b = digests(noisy.post(), ".pipeline");
    const auto models_a = digests(clean.evaluate() / "models", ".json");
    const auto models_b = digests(noisy.evaluate() / "models", ".json");
    // The perturbation must actually reach the representations for the comparison to mean anything.
    const bool perturbed = digests(clean.reps(), ".csv") != digests(noisy.reps(), ".csv");
    return {replaced > 0 && perturbed && weights && !pipes_a.empty() && pipes_a == pipes_b && !models_a.empty() &&
                models_a == models_b,
            fmt::format("{} test tiles replaced (representations changed: {}), encoder weights equal: {}, "
                        "{} pipelines equal: {}, {} models equal: {}",
                        replaced, perturbed ? "yes" : "no", weights ? "yes" : "no", pipes_a.size(),
                        pipes_a == pipes_b ? "yes" : "no", models_a.size(), models_a == models_b ? "yes" : "no")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient oracles", gradient_oracles},
        {"PCA component selection", pca_properties},
        {"k-means monotonicity and distances", kmeans_properties},
        {"lasso limits", lasso_properties},
        {"GBM training and early stopping", gbm_properties},
        {"silhouette oracle", silhouette_oracle},
        {"improvement arithmetic", improvement_arithmetic},
        {"synthetic end-to-end benchmark", synthetic_benchmark},
        {"pooling properties and grid", pooling_grid},
        {"determinism", determinism},
        {"leakage guard", leakage_guard},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        failures += o.pass ? 0 : 1;
        fmt::print("{} criterion {}: {} ({})\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}

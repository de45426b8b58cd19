#include "terrembed/error.hpp"
#include "terrembed/regress.hpp"
#include "terrembed/rng.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>

using namespace terrembed;
using namespace terrembed::regress;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x(i) = rng.normal();
    }
    return x;
}

}  // namespace

TEST_CASE("target scaling endpoints, midpoint and no clamping") {
    Eigen::VectorXd y(3);
    y << 0, 10, 4;
    const auto s = TargetScaler::fit(y);
    CHECK(s.apply(0.0) == 0.0);
    CHECK(s.apply(10.0) == 100.0);
    CHECK(s.apply(5.0) == 50.0);
    CHECK(s.apply(12.0) == doctest::Approx(120.0));
    try {
        TargetScaler::fit(Eigen::VectorXd::Constant(4, 2.0));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::degenerate);
    }
}

TEST_CASE("rmse of a perfect fit, a constant offset and mismatched lengths") {
    Eigen::VectorXd y(4);
    y << 1, 2, 3, 4;
    CHECK(rmse(y, y) == 0.0);
    CHECK(rmse(y.array() + 3.0, y) == doctest::Approx(3.0));
    try {
        rmse(y, Eigen::VectorXd::Zero(3));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dimension);
    }
}

TEST_CASE("lasso with alpha zero matches normal-equation least squares") {
    const auto x = gaussian(100, 5, 1);
    Eigen::VectorXd beta(5);
    beta << 1.5, -2.0, 0.5, 3.0, -0.7;
    const Eigen::VectorXd y = (x * beta).array() + 4.0 + 0.3 * gaussian(100, 1, 2).col(0).array();
    LassoOptions opts;
    opts.tolerance = 1e-12;
    const auto m = fit_lasso_fixed(x, y, 0.0, opts);

    Eigen::MatrixXd design(100, 6);
    design.col(0).setOnes();
    design.rightCols(5) = x;
    const Eigen::VectorXd ols = (design.transpose() * design).ldlt().solve(design.transpose() * y);
    CHECK(std::abs(m.intercept - ols(0)) < 1e-4);
    for (Eigen::Index j = 0; j < 5; ++j) {
        CHECK(std::abs(m.coefficients(j) - ols(j + 1)) < 1e-4);
    }
}

TEST_CASE("alpha at or above alpha_max zeroes every coefficient") {
    const auto x = gaussian(60, 4, 3);
    const Eigen::VectorXd y = x.col(0) * 2.0 + x.col(2);
    const double amax = lasso_alpha_max(x, y);
    for (double a : {amax, 2 * amax}) {
        const auto m = fit_lasso_fixed(x, y, a);
        CHECK(m.coefficients.isZero());
        CHECK(m.intercept == doctest::Approx(y.mean()));
    }
    CHECK_FALSE(fit_lasso_fixed(x, y, 0.9 * amax).coefficients.isZero());
}

TEST_CASE("single standardized feature gives the soft-threshold closed form") {
    Eigen::VectorXd x(6);
    x << -2, -1, 0, 0, 1, 2;
    x = (x.array() - x.mean()) / std::sqrt((x.array() - x.mean()).square().mean());
    const Eigen::VectorXd y = 2.0 * x;
    LassoOptions opts;
    opts.tolerance = 1e-14;
    for (double lambda : {0.0, 0.5, 1.3, 1.99, 2.0, 3.0}) {
        const auto m = fit_lasso_fixed(x, y, lambda, opts);
        CHECK(std::abs(m.coefficients(0) - std::max(0.0, 2.0 - lambda)) < 1e-8);
    }
}

TEST_CASE("coordinate descent objective never increases") {
    const auto x = gaussian(80, 8, 4);
    const Eigen::VectorXd y = x.col(1) * 3.0 - x.col(5) + gaussian(80, 1, 5).col(0);
    LassoTrace trace;
    LassoOptions opts;
    opts.tolerance = 1e-10;
    fit_lasso_fixed(x, y, 0.05, opts, &trace);
    REQUIRE(trace.objective.size() >= 2);
    for (std::size_t i = 1; i < trace.objective.size(); ++i) {
        CHECK(trace.objective[i] <= trace.objective[i - 1] + 1e-12);
    }
}

TEST_CASE("cross-validated lasso picks a grid alpha deterministically") {
    const auto x = gaussian(120, 6, 8);
    const Eigen::VectorXd y = x.col(0) * 2.0 + 0.5 * gaussian(120, 1, 9).col(0);
    LassoOptions opts;
    opts.n_alphas = 30;
    opts.seed = 4;
    const auto a = fit_lasso(x, y, opts);
    const auto b = fit_lasso(x, y, opts);
    CHECK(a.alpha == b.alpha);
    CHECK(a.coefficients == b.coefficients);
    CHECK(a.alpha_grid.size() == 30);
    CHECK(a.cv_rmse.size() == 30);
    CHECK(std::find(a.alpha_grid.begin(), a.alpha_grid.end(), a.alpha) != a.alpha_grid.end());
    CHECK(a.alpha_grid.front() == doctest::Approx(lasso_alpha_max(x, y)));
    CHECK(a.alpha_grid.back() == doctest::Approx(a.alpha_grid.front() * 1e-4));
    CHECK(a.coefficients(0) > 1.5);
    CHECK_THROWS_AS(fit_lasso(x, Eigen::VectorXd::Constant(120, 1.0), opts), Error);
    auto bad = x;
    bad(3, 2) = std::nan("");
    try {
        fit_lasso(bad, y, opts);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::validation);
    }
}

TEST_CASE("depth-zero single round predicts the training mean") {
    const auto x = gaussian(30, 2, 1);
    const Eigen::VectorXd y = x.col(0) * 5.0;
    GbmParams p;
    p.max_depth = 0;
    p.n_rounds_max = 1;
    const auto m = fit_gbm_fixed(x, y, x, y, p, 1);
    const auto pred = m.predict_with(gaussian(10, 2, 2), m.trees.size());
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        CHECK(pred(i) == doctest::Approx(y.mean()));
    }
}

TEST_CASE("one depth-one round at learning rate one fits a clean step exactly") {
    Eigen::MatrixXd x(20, 1);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        x(i, 0) = i - 9.5;
        y(i) = x(i, 0) > 0 ? 1.0 : 0.0;
    }
    GbmParams p;
    p.max_depth = 1;
    p.learning_rate = 1.0;
    p.min_samples_leaf = 1;
    p.n_rounds_max = 1;
    const auto m = fit_gbm_fixed(x, y, x, y, p, 1);
    CHECK(m.train_rmse.at(1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.trees[0].depth() == 1);
}

TEST_CASE("constant validation loss stops after patience rounds with best iteration zero") {
    const auto x = gaussian(40, 3, 5);
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(40, 2.5);
    const auto xv = gaussian(10, 3, 6);
    const Eigen::VectorXd yv = gaussian(10, 1, 7).col(0);
    GbmParams p;
    p.patience = 7;
    p.n_rounds_max = 100;
    const auto m = fit_gbm_fixed(x, y, xv, yv, p, 3);
    CHECK(m.best_iteration == 0);
    CHECK(m.trees.size() == 7);
}

TEST_CASE("training loss is monotone and early stopping respects patience") {
    const auto x = gaussian(150, 4, 10);
    Eigen::VectorXd y = (x.col(0).array() > 0).cast<double>() * 3.0 + x.col(1).array().square();
    y += 0.8 * gaussian(150, 1, 11).col(0);
    const auto xv = gaussian(50, 4, 12);
    Eigen::VectorXd yv = (xv.col(0).array() > 0).cast<double>() * 3.0 + xv.col(1).array().square();
    yv += 0.8 * gaussian(50, 1, 13).col(0);
    GbmParams p;
    p.max_depth = 4;
    p.learning_rate = 0.3;
    p.min_samples_leaf = 2;
    p.patience = 10;
    p.n_rounds_max = 500;
    const auto m = fit_gbm_fixed(x, y, xv, yv, p, 5);
    for (std::size_t r = 1; r < m.train_rmse.size(); ++r) {
        CHECK(m.train_rmse[r] <= m.train_rmse[r - 1] + 1e-12);
    }
    CHECK(m.trees.size() < p.n_rounds_max);
    CHECK(m.trees.size() - m.best_iteration == p.patience);
    for (std::size_t r = 0; r < m.val_rmse.size(); ++r) {
        CHECK(m.val_rmse[r] >= m.val_rmse[m.best_iteration]);
    }
    // Truncation consistency is exact, not approximate.
    CHECK((m.predict(xv).array() == m.predict_with(xv, m.best_iteration).array()).all());
    CHECK(rmse(m.predict(xv), yv) == m.val_rmse[m.best_iteration]);
}

TEST_CASE("gbm search samples inside the space and is reproducible") {
    SearchBudget budget;
    budget.n_trials = 4;
    budget.seed = 9;
    budget.n_rounds_max = 50;
    budget.patience = 5;
    for (std::size_t t = 0; t < 10; ++t) {
        const auto p = sample_params(budget, t, 200);
        CHECK(p.max_depth >= 2);
        CHECK(p.max_depth <= 8);
        CHECK(p.learning_rate >= 0.01);
        CHECK(p.learning_rate <= 0.3);
        CHECK(p.min_samples_leaf >= 5);
        CHECK(p.min_samples_leaf <= 50);
        CHECK(p.subsample >= 0.6);
        CHECK(p.subsample <= 1.0);
    }
    const auto x = gaussian(80, 3, 1);
    const Eigen::VectorXd y = x.col(0) * 2.0;
    const auto a = fit_gbm(x, y, x, y, budget);
    const auto b = fit_gbm(x, y, x, y, budget);
    CHECK(a.best_trial == b.best_trial);
    CHECK(a.trials.size() == 4);
    CHECK((a.model.predict(x).array() == b.model.predict(x).array()).all());
    for (const auto& t : a.trials) {
        CHECK(a.trials[a.best_trial].best_val_rmse <= t.best_val_rmse);
    }
    CHECK_THROWS_AS(fit_gbm(x, y, Eigen::MatrixXd(0, 3), Eigen::VectorXd(0), budget), Error);
}

TEST_CASE("model json mentions the fitted parameters") {
    const auto x = gaussian(40, 2, 1);
    const Eigen::VectorXd y = x.col(0);
    CHECK(lasso_to_json(fit_lasso_fixed(x, y, 0.01)).find("\"alpha\"") != std::string::npos);
    GbmParams p;
    p.n_rounds_max = 3;
    CHECK(gbm_to_json(fit_gbm_fixed(x, y, x, y, p, 1)).find("\"trees\"") != std::string::npos);
}

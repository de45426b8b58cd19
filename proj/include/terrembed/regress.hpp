#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace terrembed::regress {

/// Min/max rescaling to [0, 100] fitted on training targets. Values outside
/// the training range map outside [0, 100]; nothing is clamped.
struct TargetScaler {
    double min = 0.0;
    double max = 1.0;

    static TargetScaler fit(const Eigen::VectorXd& y);
    double apply(double y) const { return 100.0 * (y - min) / (max - min); }
    Eigen::VectorXd apply(const Eigen::VectorXd& y) const;
};

double rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual);

// ---------------------------------------------------------------- lasso

struct LassoOptions {
    std::size_t n_alphas = 100;
    double decades = 4.0;
    std::size_t folds = 5;
    double tolerance = 1e-6;
    std::size_t max_sweeps = 100000;
    std::uint64_t seed = 0;
};

struct LassoModel {
    double alpha = 0.0;
    double intercept = 0.0;
    Eigen::VectorXd coefficients;  // on the original feature scale
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_sd;    // population sd, 1 for constant features
    std::vector<double> alpha_grid;
    std::vector<double> cv_rmse;   // mean validation RMSE per grid alpha, empty for fixed fits

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Penalized objective (1/2n)||y - Zb||^2 + alpha ||b||_1 on standardized features.
struct LassoTrace {
    std::vector<double> objective;  // after each full sweep
    std::size_t sweeps = 0;
};

double lasso_alpha_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
std::vector<double> lasso_alpha_grid(double alpha_max, std::size_t n, double decades);

/// Coordinate descent at one alpha. `trace` is filled when non-null.
LassoModel fit_lasso_fixed(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha,
                           const LassoOptions& options = {}, LassoTrace* trace = nullptr);

/// Cross-validated alpha over the log grid, then a refit on all rows.
LassoModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LassoOptions& options = {});

// ---------------------------------------------------------------- gbm

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output, already scaled by the learning rate
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // root at 0

    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    std::size_t depth() const;
};

struct GbmParams {
    int max_depth = 3;
    double learning_rate = 0.1;
    std::size_t min_samples_leaf = 5;
    double subsample = 1.0;
    std::size_t n_rounds_max = 1000;
    std::size_t patience = 20;
};

struct GbmModel {
    double base = 0.0;
    std::vector<RegressionTree> trees;  // every round that was grown
    std::size_t best_iteration = 0;     // prediction uses trees[0, best_iteration)
    GbmParams params;
    std::vector<double> train_rmse;     // index r = after r trees
    std::vector<double> val_rmse;

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd predict_with(const Eigen::MatrixXd& x, std::size_t n_trees) const;
    std::size_t feature_count = 0;
};

GbmModel fit_gbm_fixed(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train, const Eigen::MatrixXd& x_val,
                       const Eigen::VectorXd& y_val, const GbmParams& params, std::uint64_t seed);

struct SearchSpace {
    int depth_min = 2;
    int depth_max = 8;
    double lr_min = 0.01;
    double lr_max = 0.3;
    std::size_t leaf_min = 5;
    std::size_t leaf_max = 50;
    double subsample_min = 0.6;
    double subsample_max = 1.0;
};

struct SearchBudget {
    std::size_t n_trials = 20;
    std::uint64_t seed = 0;
    SearchSpace space;
    std::size_t n_rounds_max = 1000;
    std::size_t patience = 20;
};

struct Trial {
    GbmParams params;
    double best_val_rmse = 0.0;
    std::size_t best_iteration = 0;
};

struct GbmSearchResult {
    GbmModel model;
    std::vector<Trial> trials;
    std::size_t best_trial = 0;
};

GbmParams sample_params(const SearchBudget& budget, std::size_t trial, std::size_t train_rows);

GbmSearchResult fit_gbm(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train, const Eigen::MatrixXd& x_val,
                        const Eigen::VectorXd& y_val, const SearchBudget& budget);

std::string lasso_to_json(const LassoModel& model);
std::string gbm_to_json(const GbmModel& model);

}  // namespace terrembed::regress

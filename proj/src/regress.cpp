#include "terrembed/regress.hpp"

#include "terrembed/error.hpp"
#include "terrembed/parallel.hpp"
#include "terrembed/rng.hpp"

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <tuple>

namespace terrembed::regress {

TargetScaler TargetScaler::fit(const Eigen::VectorXd& y) {
    require(y.size() > 0, ErrorKind::dimension, "target scaler: no training values");
    require(y.allFinite(), ErrorKind::validation, "target scaler: non-finite training value");
    TargetScaler s{y.minCoeff(), y.maxCoeff()};
    require(s.max > s.min, ErrorKind::degenerate,
            fmt::format("target scaler: degenerate index (min = max = {})", s.min));
    return s;
}

Eigen::VectorXd TargetScaler::apply(const Eigen::VectorXd& y) const {
    Eigen::VectorXd out(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        out(i) = apply(y(i));
    }
    return out;
}

double rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual) {
    require(predicted.size() == actual.size(), ErrorKind::dimension,
            fmt::format("rmse: {} predictions for {} targets", predicted.size(), actual.size()));
    require(actual.size() > 0, ErrorKind::dimension, "rmse: empty input");
    return std::sqrt((predicted - actual).squaredNorm() / static_cast<double>(actual.size()));
}

// ---------------------------------------------------------------- lasso

namespace {

struct Prepared {
    Eigen::MatrixXd z;
    Eigen::VectorXd yc;
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
    Eigen::VectorXd col_scale;  // (1/n)||z_j||^2, 0 for constant columns
    double y_mean = 0.0;
};

void check_inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    require(x.rows() == y.size(), ErrorKind::dimension,
            fmt::format("lasso: {} feature rows for {} targets", x.rows(), y.size()));
    require(x.rows() >= 2, ErrorKind::dimension, "lasso: need at least two rows");
    require(x.allFinite(), ErrorKind::validation, "lasso: non-finite feature value");
    require(y.allFinite(), ErrorKind::validation, "lasso: non-finite target value");
    require(y.maxCoeff() > y.minCoeff(), ErrorKind::degenerate, "lasso: target is constant");
}

Prepared prepare(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    Prepared p;
    const double n = static_cast<double>(x.rows());
    p.mean = x.colwise().mean().transpose();
    p.sd.resize(x.cols());
    p.z.resize(x.rows(), x.cols());
    p.col_scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double sd = std::sqrt((x.col(j).array() - p.mean(j)).square().sum() / n);
        p.sd(j) = sd < 1e-12 ? 1.0 : sd;
        p.z.col(j) = (x.col(j).array() - p.mean(j)) / p.sd(j);
        p.col_scale(j) = p.z.col(j).squaredNorm() / n;
    }
    p.y_mean = y.mean();
    p.yc = y.array() - p.y_mean;
    return p;
}

double soft_threshold(double v, double t) {
    if (v > t) {
        return v - t;
    }
    if (v < -t) {
        return v + t;
    }
    return 0.0;
}

double objective(const Eigen::VectorXd& r, const Eigen::VectorXd& beta, double alpha) {
    return 0.5 * r.squaredNorm() / static_cast<double>(r.size()) + alpha * beta.cwiseAbs().sum();
}

// Cyclic coordinate descent; a full sweep is followed by sweeps over the
// nonzero coefficients until they settle, then another full sweep checks.
void coordinate_descent(const Prepared& p, double alpha, Eigen::VectorXd& beta, Eigen::VectorXd& r,
                        const LassoOptions& options, LassoTrace* trace) {
    const double n = static_cast<double>(p.z.rows());
    const Eigen::Index cols = p.z.cols();
    std::size_t sweeps = 0;
    auto sweep = [&](bool active_only) {
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (p.col_scale(j) == 0.0 || (active_only && beta(j) == 0.0)) {
                continue;
            }
            const double rho = p.z.col(j).dot(r) / n + p.col_scale(j) * beta(j);
            const double updated = soft_threshold(rho, alpha) / p.col_scale(j);
            const double delta = updated - beta(j);
            if (delta != 0.0) {
                r.noalias() -= delta * p.z.col(j);
                beta(j) = updated;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        ++sweeps;
        if (trace != nullptr) {
            trace->objective.push_back(objective(r, beta, alpha));
        }
        return max_delta;
    };
    while (sweeps < options.max_sweeps) {
        if (sweep(false) < options.tolerance) {
            break;
        }
        while (sweeps < options.max_sweeps && sweep(true) >= options.tolerance) {
        }
    }
    if (trace != nullptr) {
        trace->sweeps += sweeps;
    }
}

LassoModel finish(const Prepared& p, const Eigen::VectorXd& beta, double alpha) {
    LassoModel m;
    m.alpha = alpha;
    m.feature_mean = p.mean;
    m.feature_sd = p.sd;
    m.coefficients = beta.array() / p.sd.array();
    m.intercept = p.y_mean - m.coefficients.dot(p.mean);
    return m;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    }
    return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = y(rows[i]);
    }
    return out;
}

}  // namespace

Eigen::VectorXd LassoModel::predict(const Eigen::MatrixXd& x) const {
    require(x.cols() == coefficients.size(), ErrorKind::dimension,
            fmt::format("lasso predict: expected {} features, got {}", coefficients.size(), x.cols()));
    return (x * coefficients).array() + intercept;
}

double lasso_alpha_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const auto p = prepare(x, y);
    return (p.z.transpose() * p.yc).cwiseAbs().maxCoeff() / static_cast<double>(x.rows());
}

std::vector<double> lasso_alpha_grid(double alpha_max, std::size_t n, double decades) {
    require(n >= 1, ErrorKind::configuration, "lasso: alpha grid needs at least one value");
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double frac = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        grid[i] = alpha_max * std::pow(10.0, -decades * frac);
    }
    return grid;
}

LassoModel fit_lasso_fixed(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha,
                           const LassoOptions& options, LassoTrace* trace) {
    check_inputs(x, y);
    require(alpha >= 0.0, ErrorKind::configuration, "lasso: alpha must be non-negative");
    const auto p = prepare(x, y);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
    Eigen::VectorXd r = p.yc;
    if (trace != nullptr) {
        trace->objective.push_back(objective(r, beta, alpha));
    }
    coordinate_descent(p, alpha, beta, r, options, trace);
    return finish(p, beta, alpha);
}

LassoModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LassoOptions& options) {
    check_inputs(x, y);
    require(options.folds >= 2, ErrorKind::configuration, "lasso: need at least two folds");
    require(static_cast<std::size_t>(x.rows()) >= options.folds, ErrorKind::configuration,
            fmt::format("lasso: {} rows are fewer than {} folds", x.rows(), options.folds));
    const auto full = prepare(x, y);
    const double alpha_max =
        std::max((full.z.transpose() * full.yc).cwiseAbs().maxCoeff() / static_cast<double>(x.rows()), 1e-12);
    const auto grid = lasso_alpha_grid(alpha_max, options.n_alphas, options.decades);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(derive_seed(options.seed, 0x1a550));
    rng.shuffle(order);

    std::vector<std::vector<double>> fold_rmse(options.folds, std::vector<double>(grid.size()));
    parallel_for(options.folds, [&](std::size_t f) {
        std::vector<Eigen::Index> train;
        std::vector<Eigen::Index> held;
        for (std::size_t i = 0; i < order.size(); ++i) {
            (i % options.folds == f ? held : train).push_back(order[i]);
        }
        const auto p = prepare(take_rows(x, train), take(y, train));
        const Eigen::MatrixXd x_held = take_rows(x, held);
        const Eigen::VectorXd y_held = take(y, held);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
        Eigen::VectorXd r = p.yc;
        for (std::size_t a = 0; a < grid.size(); ++a) {
            coordinate_descent(p, grid[a], beta, r, options, nullptr);
            fold_rmse[f][a] = rmse(finish(p, beta, grid[a]).predict(x_held), y_held);
        }
    });

    std::vector<double> cv(grid.size(), 0.0);
    std::size_t chosen = 0;
    for (std::size_t a = 0; a < grid.size(); ++a) {
        for (std::size_t f = 0; f < options.folds; ++f) {
            cv[a] += fold_rmse[f][a];
        }
        cv[a] /= static_cast<double>(options.folds);
        if (cv[a] < cv[chosen]) {
            chosen = a;
        }
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
    Eigen::VectorXd r = full.yc;
    for (std::size_t a = 0; a <= chosen; ++a) {
        coordinate_descent(full, grid[a], beta, r, options, nullptr);
    }
    auto model = finish(full, beta, grid[chosen]);
    model.alpha_grid = grid;
    model.cv_rmse = std::move(cv);
    return model;
}

// ---------------------------------------------------------------- gbm

double RegressionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(at)];
        at = row(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(at)].value;
}

std::size_t RegressionTree::depth() const {
    std::vector<std::size_t> level(nodes.size(), 0);
    std::size_t deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, level[i]);
        if (nodes[i].feature >= 0) {
            level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
            level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
        }
    }
    return deepest;
}

Eigen::VectorXd GbmModel::predict_with(const Eigen::MatrixXd& x, std::size_t n_trees) const {
    require(static_cast<std::size_t>(x.cols()) == feature_count, ErrorKind::dimension,
            fmt::format("gbm predict: expected {} features, got {}", feature_count, x.cols()));
    require(n_trees <= trees.size(), ErrorKind::state, "gbm predict: more trees requested than grown");
    Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), base);
    for (std::size_t t = 0; t < n_trees; ++t) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            out(i) += trees[t].predict(x.row(i));
        }
    }
    return out;
}

Eigen::VectorXd GbmModel::predict(const Eigen::MatrixXd& x) const { return predict_with(x, best_iteration); }

namespace {

struct SplitScan {
    std::size_t count_left = 0;
    double sum_left = 0.0;
    double last = 0.0;
    bool seen = false;
};

struct NodeStats {
    std::size_t count = 0;
    double sum = 0.0;
    int depth = 0;
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
};

// Level-wise exact greedy tree on presorted feature orders.
RegressionTree grow_tree(const Eigen::MatrixXd& x, const std::vector<std::vector<Eigen::Index>>& sorted,
                         const Eigen::VectorXd& residual, const std::vector<char>& in_sample, const GbmParams& params) {
    constexpr double kMinGain = 1e-12;
    const auto n = static_cast<std::size_t>(x.rows());
    RegressionTree tree;
    std::vector<NodeStats> stats(1);
    tree.nodes.emplace_back();
    std::vector<int> node_of(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (in_sample[i] != 0) {
            node_of[i] = 0;
            ++stats[0].count;
            stats[0].sum += residual(static_cast<Eigen::Index>(i));
        }
    }
    const std::size_t min_leaf = std::max<std::size_t>(params.min_samples_leaf, 1);
    std::vector<int> open{0};
    for (int depth = 0; depth < params.max_depth && !open.empty(); ++depth) {
        std::vector<char> is_open(stats.size(), 0);
        for (int nd : open) {
            if (stats[static_cast<std::size_t>(nd)].count >= 2 * min_leaf) {
                is_open[static_cast<std::size_t>(nd)] = 1;
            }
        }
        std::vector<SplitScan> scan(stats.size());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            std::fill(scan.begin(), scan.end(), SplitScan{});
            for (Eigen::Index i : sorted[static_cast<std::size_t>(j)]) {
                const int nd = node_of[static_cast<std::size_t>(i)];
                if (nd < 0 || is_open[static_cast<std::size_t>(nd)] == 0) {
                    continue;
                }
                auto& s = scan[static_cast<std::size_t>(nd)];
                auto& st = stats[static_cast<std::size_t>(nd)];
                const double v = x(i, j);
                if (s.seen && v > s.last) {
                    const std::size_t count_right = st.count - s.count_left;
                    if (s.count_left >= min_leaf && count_right >= min_leaf) {
                        const double sum_right = st.sum - s.sum_left;
                        const double gain = s.sum_left * s.sum_left / static_cast<double>(s.count_left) +
                                            sum_right * sum_right / static_cast<double>(count_right) -
                                            st.sum * st.sum / static_cast<double>(st.count);
                        if (gain > kMinGain && gain > st.best_gain) {
                            double t = 0.5 * (s.last + v);
                            if (!(t < v)) {
                                t = s.last;
                            }
                            st.best_gain = gain;
                            st.best_feature = static_cast<int>(j);
                            st.best_threshold = t;
                        }
                    }
                }
                ++s.count_left;
                s.sum_left += residual(i);
                s.last = v;
                s.seen = true;
            }
        }
        std::vector<int> next;
        std::vector<int> child_left(stats.size(), -1);
        for (int nd : open) {
            auto& st = stats[static_cast<std::size_t>(nd)];
            if (is_open[static_cast<std::size_t>(nd)] == 0 || st.best_feature < 0) {
                continue;
            }
            const int left = static_cast<int>(tree.nodes.size());
            auto& node = tree.nodes[static_cast<std::size_t>(nd)];
            node.feature = st.best_feature;
            node.threshold = st.best_threshold;
            node.left = left;
            node.right = left + 1;
            child_left[static_cast<std::size_t>(nd)] = left;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            stats.push_back(NodeStats{0, 0.0, depth + 1});
            stats.push_back(NodeStats{0, 0.0, depth + 1});
            next.push_back(left);
            next.push_back(left + 1);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const int nd = node_of[i];
            if (nd < 0 || static_cast<std::size_t>(nd) >= child_left.size() || child_left[static_cast<std::size_t>(nd)] < 0) {
                continue;
            }
            const auto& node = tree.nodes[static_cast<std::size_t>(nd)];
            const int child = x(static_cast<Eigen::Index>(i), node.feature) <= node.threshold ? node.left : node.right;
            node_of[i] = child;
            ++stats[static_cast<std::size_t>(child)].count;
            stats[static_cast<std::size_t>(child)].sum += residual(static_cast<Eigen::Index>(i));
        }
        open = std::move(next);
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
        if (tree.nodes[k].feature < 0 && stats[k].count > 0) {
            tree.nodes[k].value = params.learning_rate * stats[k].sum / static_cast<double>(stats[k].count);
        }
    }
    return tree;
}

}  // namespace

GbmModel fit_gbm_fixed(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train, const Eigen::MatrixXd& x_val,
                       const Eigen::VectorXd& y_val, const GbmParams& params, std::uint64_t seed) {
    require(x_val.rows() > 0, ErrorKind::configuration, "gbm: validation set is empty");
    require(x_train.rows() > 0, ErrorKind::configuration, "gbm: training set is empty");
    require(x_train.rows() == y_train.size() && x_val.rows() == y_val.size(), ErrorKind::dimension,
            "gbm: feature rows and targets differ in length");
    require(x_train.cols() == x_val.cols(), ErrorKind::dimension, "gbm: train and validation widths differ");
    require(x_train.allFinite() && x_val.allFinite() && y_train.allFinite() && y_val.allFinite(),
            ErrorKind::validation, "gbm: non-finite input");
    require(params.max_depth >= 0 && params.learning_rate > 0.0 && params.subsample > 0.0 && params.subsample <= 1.0,
            ErrorKind::configuration, "gbm: invalid hyperparameters");

    const auto n = static_cast<std::size_t>(x_train.rows());
    std::vector<std::vector<Eigen::Index>> sorted(static_cast<std::size_t>(x_train.cols()));
    for (Eigen::Index j = 0; j < x_train.cols(); ++j) {
        auto& order = sorted[static_cast<std::size_t>(j)];
        order.resize(n);
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return x_train(a, j) < x_train(b, j); });
    }

    GbmModel model;
    model.params = params;
    model.feature_count = static_cast<std::size_t>(x_train.cols());
    model.base = y_train.mean();
    Eigen::VectorXd pred_train = Eigen::VectorXd::Constant(x_train.rows(), model.base);
    Eigen::VectorXd pred_val = Eigen::VectorXd::Constant(x_val.rows(), model.base);
    model.train_rmse.push_back(rmse(pred_train, y_train));
    model.val_rmse.push_back(rmse(pred_val, y_val));

    double best = model.val_rmse.front();
    std::size_t stale = 0;
    Rng rng(seed);
    std::vector<std::size_t> rows(n);
    std::vector<char> in_sample(n, 1);
    const auto sample_size =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(params.subsample * static_cast<double>(n))));
    for (std::size_t round = 1; round <= params.n_rounds_max; ++round) {
        if (sample_size < n) {
            std::iota(rows.begin(), rows.end(), std::size_t{0});
            rng.shuffle(rows);
            std::fill(in_sample.begin(), in_sample.end(), 0);
            for (std::size_t i = 0; i < sample_size; ++i) {
                in_sample[rows[i]] = 1;
            }
        }
        const Eigen::VectorXd residual = y_train - pred_train;
        model.trees.push_back(grow_tree(x_train, sorted, residual, in_sample, params));
        const auto& tree = model.trees.back();
        for (Eigen::Index i = 0; i < x_train.rows(); ++i) {
            pred_train(i) += tree.predict(x_train.row(i));
        }
        for (Eigen::Index i = 0; i < x_val.rows(); ++i) {
            pred_val(i) += tree.predict(x_val.row(i));
        }
        model.train_rmse.push_back(rmse(pred_train, y_train));
        model.val_rmse.push_back(rmse(pred_val, y_val));
        if (model.val_rmse.back() < best) {
            best = model.val_rmse.back();
            model.best_iteration = round;
            stale = 0;
        } else if (++stale >= params.patience) {
            break;
        }
    }
    return model;
}

GbmParams sample_params(const SearchBudget& budget, std::size_t trial, std::size_t train_rows) {
    const auto& s = budget.space;
    Rng rng(derive_seed(budget.seed, 0x6b3, trial));
    GbmParams p;
    p.max_depth = static_cast<int>(rng.uniform_int(s.depth_min, s.depth_max));
    p.learning_rate = rng.log_uniform(s.lr_min, s.lr_max);
    p.min_samples_leaf = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(s.leaf_min), static_cast<std::int64_t>(s.leaf_max)));
    p.min_samples_leaf = std::min(p.min_samples_leaf, std::max<std::size_t>(1, train_rows / 2));
    p.subsample = rng.uniform(s.subsample_min, s.subsample_max);
    p.n_rounds_max = budget.n_rounds_max;
    p.patience = budget.patience;
    return p;
}

GbmSearchResult fit_gbm(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train, const Eigen::MatrixXd& x_val,
                        const Eigen::VectorXd& y_val, const SearchBudget& budget) {
    require(budget.n_trials >= 1, ErrorKind::configuration, "gbm search: at least one trial is required");
    require(x_val.rows() > 0, ErrorKind::configuration, "gbm: validation set is empty");
    GbmSearchResult result;
    result.trials.resize(budget.n_trials);
    std::mutex guard;
    bool have = false;
    parallel_for(budget.n_trials, [&](std::size_t t) {
        const auto params = sample_params(budget, t, static_cast<std::size_t>(x_train.rows()));
        auto model = fit_gbm_fixed(x_train, y_train, x_val, y_val, params, derive_seed(budget.seed, 0x6b4, t));
        const double score = model.val_rmse[model.best_iteration];
        std::lock_guard lock(guard);
        result.trials[t] = Trial{params, score, model.best_iteration};
        const double incumbent = have ? result.trials[result.best_trial].best_val_rmse : 0.0;
        if (!have || score < incumbent || (score == incumbent && t < result.best_trial)) {
            have = true;
            result.best_trial = t;
            result.model = std::move(model);
        }
    });
    return result;
}

namespace {

nlohmann::ordered_json node_json(const RegressionTree& tree, int at) {
    const auto& n = tree.nodes[static_cast<std::size_t>(at)];
    nlohmann::ordered_json j;
    if (n.feature < 0) {
        j["value"] = n.value;
        return j;
    }
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["left"] = node_json(tree, n.left);
    j["right"] = node_json(tree, n.right);
    return j;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string lasso_to_json(const LassoModel& model) {
    nlohmann::ordered_json j;
    j["model"] = "lasso";
    j["alpha"] = model.alpha;
    j["intercept"] = model.intercept;
    j["coefficients"] = to_std(model.coefficients);
    j["feature_mean"] = to_std(model.feature_mean);
    j["feature_sd"] = to_std(model.feature_sd);
    j["alpha_grid"] = model.alpha_grid;
    j["cv_rmse"] = model.cv_rmse;
    return j.dump(2) + "\n";
}

std::string gbm_to_json(const GbmModel& model) {
    nlohmann::ordered_json j;
    j["model"] = "gbm";
    j["base"] = model.base;
    j["learning_rate"] = model.params.learning_rate;
    j["best_iteration"] = model.best_iteration;
    j["hyperparameters"] = {{"max_depth", model.params.max_depth},
                            {"min_samples_leaf", model.params.min_samples_leaf},
                            {"subsample_ratio", model.params.subsample},
                            {"n_rounds_max", model.params.n_rounds_max},
                            {"patience", model.params.patience}};
    auto trees = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < model.best_iteration; ++t) {
        trees.push_back(node_json(model.trees[t], 0));
    }
    j["trees"] = std::move(trees);
    return j.dump(2) + "\n";
}

}  // namespace terrembed::regress

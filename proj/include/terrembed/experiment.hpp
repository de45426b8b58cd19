#pragma once

#include "terrembed/aggregate.hpp"
#include "terrembed/raster.hpp"
#include "terrembed/regress.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace terrembed::experiment {

inline constexpr double kHoldoutFraction = 0.2;

struct SplitPlan {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::string test_group;
    std::string val_group;
    std::size_t test_group_areas = 0;
    std::size_t val_group_areas = 0;
    std::uint64_t seed = 0;

    /// "train", "val", "test" or nullopt for areas outside the plan.
    std::optional<std::string> split_of(const std::string& area_id) const;
};

/// Hold-out quota per split: round(0.2 n).
std::size_t holdout_quota(std::size_t n_areas);

/// Fraction of a hold-out quota left to random fill once the group is placed.
double random_fill_share(double group_share);

/// Test = every area of `test_group` plus seeded random areas up to the
/// quota; validation likewise; train is the remainder.
SplitPlan build_split(const std::vector<raster::AreaUnit>& areas, const std::string& test_group,
                      const std::string& val_group, std::uint64_t seed);

std::string format_split_json(const SplitPlan& plan);
SplitPlan parse_split_json(const std::string& text);

/// Area-level index table. Column order follows the file header.
struct IndexTable {
    std::vector<std::string> names;
    std::map<std::string, std::vector<double>> values;  // area id -> one value per name

    std::size_t column(const std::string& name) const;
};

IndexTable parse_indices_csv(const std::string& text, const std::string& context);
std::string format_indices_csv(const IndexTable& table);

enum class Subset { demographic, embedding, combined };
enum class ModelKind { lasso, gbm };

std::string_view to_string(Subset s);
std::string_view to_string(ModelKind m);
Subset parse_subset(std::string_view text);
ModelKind parse_model_kind(std::string_view text);

struct ExperimentSpec {
    std::string domain;       // target index name
    Subset subset = Subset::demographic;
    std::string source;       // simclr, random-encoder, external
    std::string layer;        // L1..L4 or backbone; empty for external features
    std::size_t k = 0;
    aggregate::PoolMethod pooling = aggregate::PoolMethod::mean;
    ModelKind model = ModelKind::lasso;
    std::uint64_t seed = 0;

    /// Key of the pooled table this spec reads.
    std::string feature_key() const;
};

std::string feature_key(const std::string& source, const std::string& layer, std::size_t k, aggregate::PoolMethod pooling);

/// "simclr-L1" -> {simclr, L1}; "random-encoder-L2" -> {random-encoder, L2}; "external" -> {external, ""}.
std::pair<std::string, std::string> split_source_label(const std::string& label);
std::string source_label(const std::string& source, const std::string& layer);

struct SplitData {
    std::vector<std::string> area_ids;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;      // scaled target
    Eigen::VectorXd y_raw;
};

struct Dataset {
    SplitData train;
    SplitData val;
    SplitData test;
    regress::TargetScaler scaler;
    std::vector<std::string> dropped;  // areas in the plan without pooled features
};

Dataset assemble_features(const ExperimentSpec& spec, const IndexTable& indices,
                          const std::vector<aggregate::PooledFeatures>* pooled, const SplitPlan& plan);

struct ModelSettings {
    regress::LassoOptions lasso;
    regress::SearchBudget gbm;
};

struct Prediction {
    std::string split;
    std::string area_id;
    double actual = 0.0;
    double predicted = 0.0;
};

struct ResultRow {
    ExperimentSpec spec;
    double val_rmse = 0.0;
    double test_rmse = 0.0;
    double improvement_pct = 0.0;  // full precision
    bool failed = false;
    std::string error;
    std::vector<Prediction> predictions;
    std::string model_json;

    long display_improvement() const;
};

/// 100 (demo - subset) / demo.
double improvement_pct(double demographic_rmse, double subset_rmse);

struct FitOutcome {
    double val_rmse = 0.0;
    double test_rmse = 0.0;
    std::vector<Prediction> predictions;
    std::string model_json;
};

FitOutcome fit_and_score(const Dataset& data, ModelKind model, const ModelSettings& settings, std::uint64_t seed);

/// Full cartesian grid in a fixed order: domain, subset, source label, K, pooling, model.
std::vector<ExperimentSpec> expand_grid(const std::vector<std::string>& domains, const std::vector<Subset>& subsets,
                                        const std::vector<std::string>& source_labels, const std::vector<std::size_t>& sizes,
                                        const std::vector<aggregate::PoolMethod>& poolings,
                                        const std::vector<ModelKind>& models, std::uint64_t seed);

using PooledTables = std::map<std::string, std::vector<aggregate::PooledFeatures>>;

/// One row per spec. Demographic fits are cached per (domain, model) and
/// shared by every cell that compares against them.
std::vector<ResultRow> run_grid(const std::vector<ExperimentSpec>& specs, const IndexTable& indices,
                                const PooledTables& pooled, const SplitPlan& plan, const ModelSettings& settings);

std::string format_results_csv(const std::vector<ResultRow>& rows);
std::string format_predictions_csv(const std::vector<ResultRow>& rows);

struct ChartGroup {
    std::string label;
    std::vector<double> values;
};

/// Box plot (quartiles, min/max whiskers) as a standalone SVG.
std::string box_plot_svg(const std::string& title, const std::string& axis_label, const std::vector<ChartGroup>& groups);

/// Writes results.csv, predictions.csv and one improvement chart per factor
/// (pooling, model, source, size, layer) into `dir`.
void write_reports(const std::vector<ResultRow>& rows, const std::filesystem::path& dir);

}  // namespace terrembed::experiment

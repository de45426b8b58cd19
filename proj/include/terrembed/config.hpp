#pragma once

#include "terrembed/augment.hpp"
#include "terrembed/contrastive.hpp"
#include "terrembed/embedding.hpp"
#include "terrembed/encoder.hpp"
#include "terrembed/landscape.hpp"
#include "terrembed/raster.hpp"
#include "terrembed/regress.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace terrembed::config {

/// Every tunable of a run in one document. Defaults reproduce the
/// 16 x 16-area benchmark.
struct RunConfig {
    // [run]
    unsigned threads = 0;
    std::string log_level = "info";

    // [scene]
    landscape::SceneConfig scene;

    // [tiles]
    std::uint32_t tile_side = 128;
    std::uint32_t input_side = 64;
    raster::NodataPolicy nodata_policy = raster::NodataPolicy::impute_zero;

    // [augment]
    augment::AugmentSpec augment;

    // [encoder]
    encoder::EncoderConfig encoder;
    std::uint64_t encoder_seed = 3;
    std::uint64_t random_encoder_seed = 5;

    // [contrastive]
    contrastive::ContrastiveConfig contrastive;

    // [embedding]
    std::vector<std::string> sources = {"simclr-L1", "random-encoder-L1"};
    std::vector<std::size_t> sizes = {4, 8, 16, 32};
    double variance_target = 0.99;
    std::uint64_t kmeans_seed = 13;
    embedding::KMeansOptions kmeans;
    std::string external_features;

    // [aggregate]
    std::vector<std::string> poolings = {"mean", "max"};

    // [experiment]
    std::vector<std::string> domains = {"income", "crime", "living_env"};
    std::vector<std::string> subsets = {"demographic", "embedding", "combined"};
    std::vector<std::string> models = {"lasso", "gbm"};
    std::string test_group = "g05";
    std::string val_group = "g10";
    std::uint64_t split_seed = 17;
    std::uint64_t model_seed = 19;
    std::size_t lasso_alphas = 100;
    std::size_t lasso_folds = 5;
    std::size_t gbm_trials = 20;
    std::size_t gbm_rounds = 1000;
    std::size_t gbm_patience = 20;

    // [interpret]
    std::uint64_t interpret_seed = 23;
    std::size_t representatives = 8;
    std::string interpret_source = "simclr-L1";

    /// Throws a configuration error for inconsistent settings.
    void validate() const;
};

/// Parses the TOML-style document; keys absent from the file keep their
/// defaults, unknown sections or keys are rejected.
RunConfig parse_config(const std::string& text, const std::string& context = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Applies "section.key=value" where value uses the same syntax as the file.
/// Call validate() once every override is in place.
void apply_override(RunConfig& config, const std::string& assignment);

/// Canonical document listing every key; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

/// SHA-256 of the canonical document.
std::string config_hash(const RunConfig& config);

/// Named seeds for manifests.
std::vector<std::pair<std::string, std::uint64_t>> seeds(const RunConfig& config);

}  // namespace terrembed::config

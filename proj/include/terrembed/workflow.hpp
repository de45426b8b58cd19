#pragma once

#include "terrembed/config.hpp"
#include "terrembed/experiment.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace terrembed::workflow {

/// Fixed layout of a run directory; each stage owns one subdirectory.
struct Layout {
    std::filesystem::path root;

    std::filesystem::path scene() const { return root / "scene"; }
    std::filesystem::path ingest() const { return root / "ingest"; }
    std::filesystem::path train() const { return root / "train"; }
    std::filesystem::path reps() const { return root / "reps"; }
    std::filesystem::path post() const { return root / "post"; }
    std::filesystem::path pooled() const { return root / "pooled"; }
    std::filesystem::path evaluate() const { return root / "evaluate"; }
    std::filesystem::path interpret() const { return root / "interpret"; }
    std::filesystem::path report() const { return root / "report"; }

    std::filesystem::path tile_store() const { return ingest() / "tiles.bin"; }
    std::filesystem::path assignment() const { return ingest() / "assignment.csv"; }
    std::filesystem::path split() const { return ingest() / "split.json"; }
    std::filesystem::path indices() const { return ingest() / "indices.csv"; }
    std::filesystem::path weights() const { return train() / "encoder.bin"; }
    std::filesystem::path representations(const std::string& label) const { return reps() / (label + ".csv"); }
    std::filesystem::path pipeline(const std::string& label, std::size_t k) const;
    std::filesystem::path embeddings(const std::string& label, std::size_t k) const;
    std::filesystem::path silhouette(const std::string& label) const { return post() / (label + "_silhouette.csv"); }
    std::filesystem::path pooled_table(const std::string& key) const { return pooled() / (key + ".csv"); }
};

struct IngestInputs {
    std::filesystem::path surface;
    std::filesystem::path terrain;
    std::filesystem::path areas;
    std::filesystem::path indices;

    static IngestInputs from_scene(const std::filesystem::path& scene_dir);
};

/// Applies threads and log level from the config.
void apply_runtime(const config::RunConfig& config);

void run_synth(const config::RunConfig& config, const std::filesystem::path& out_dir);
void run_ingest(const config::RunConfig& config, const IngestInputs& inputs, const Layout& layout);
void run_train(const config::RunConfig& config, const Layout& layout);
void run_embed(const config::RunConfig& config, const Layout& layout);
void run_post(const config::RunConfig& config, const Layout& layout);
void run_pool(const config::RunConfig& config, const Layout& layout);
std::vector<experiment::ResultRow> run_evaluate(const config::RunConfig& config, const Layout& layout);
void run_interpret(const config::RunConfig& config, const Layout& layout);
void run_report(const config::RunConfig& config, const Layout& layout);

/// synth -> ingest -> train -> embed -> post -> pool -> evaluate -> interpret -> report.
void run_all(const config::RunConfig& config, const Layout& layout);

/// Tiles whose area is in the training split.
raster::TileSet training_tiles(const raster::TileSet& tiles, const raster::TileAssignment& assignment,
                               const experiment::SplitPlan& plan);

/// Manifest with stage name, config hash, seeds and SHA-256 of inputs and outputs.
void write_manifest(const std::filesystem::path& dir, const std::string& stage, const config::RunConfig& config,
                    const std::vector<std::filesystem::path>& inputs, const std::vector<std::filesystem::path>& outputs,
                    const std::filesystem::path& relative_to);

}  // namespace terrembed::workflow

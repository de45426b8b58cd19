#include "terrembed/workflow.hpp"

#include "terrembed/aggregate.hpp"
#include "terrembed/contrastive.hpp"
#include "terrembed/embedding.hpp"
#include "terrembed/error.hpp"
#include "terrembed/interpret.hpp"
#include "terrembed/io.hpp"
#include "terrembed/landscape.hpp"
#include "terrembed/log.hpp"
#include "terrembed/parallel.hpp"

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

namespace terrembed::workflow {

namespace fs = std::filesystem;

std::filesystem::path Layout::pipeline(const std::string& label, std::size_t k) const {
    return post() / fmt::format("{}_K{}.pipeline", label, k);
}

std::filesystem::path Layout::embeddings(const std::string& label, std::size_t k) const {
    return post() / fmt::format("{}_K{}_embeddings.csv", label, k);
}

IngestInputs IngestInputs::from_scene(const std::filesystem::path& scene_dir) {
    return {scene_dir / "surface.asc", scene_dir / "terrain.asc", scene_dir / "areas.geojson", scene_dir / "indices.csv"};
}

namespace {

void require_file(const fs::path& path, const std::string& what) {
    require(fs::exists(path), ErrorKind::missing_input, fmt::format("missing {}: {}", what, path.string()));
}

experiment::SplitPlan load_split(const Layout& layout) {
    require_file(layout.split(), "split plan (run ingest first)");
    return experiment::parse_split_json(io::read_text(layout.split()));
}

raster::TileAssignment load_assignment(const Layout& layout) {
    require_file(layout.assignment(), "tile assignment (run ingest first)");
    return raster::parse_assignment_csv(io::read_text(layout.assignment()));
}

raster::TileSet load_tiles(const Layout& layout) {
    require_file(layout.tile_store(), "tile store (run ingest first)");
    return raster::load_tile_store(layout.tile_store());
}

encoder::RepresentationMatrix load_reps(const Layout& layout, const std::string& label) {
    const auto path = layout.representations(label);
    require_file(path, fmt::format("representations for {} (run embed first)", label));
    return encoder::parse_representations_csv(io::read_text(path), path.string());
}

std::vector<embedding::TileEmbedding> load_embeddings(const Layout& layout, const std::string& label, std::size_t k) {
    const auto path = layout.embeddings(label, k);
    require_file(path, fmt::format("tile embeddings for {} K={} (run post first)", label, k));
    return embedding::parse_embeddings_csv(io::read_text(path), path.string());
}

std::vector<std::string> all_area_ids(const experiment::SplitPlan& plan) {
    std::vector<std::string> ids = plan.train;
    ids.insert(ids.end(), plan.val.begin(), plan.val.end());
    ids.insert(ids.end(), plan.test.begin(), plan.test.end());
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::set<std::uint64_t> training_tile_ids(const raster::TileAssignment& assignment, const experiment::SplitPlan& plan) {
    std::set<std::uint64_t> ids;
    for (const auto& [tile, area] : assignment.area_of) {
        if (std::binary_search(plan.train.begin(), plan.train.end(), area)) {
            ids.insert(tile);
        }
    }
    return ids;
}

}  // namespace

raster::TileSet training_tiles(const raster::TileSet& tiles, const raster::TileAssignment& assignment,
                               const experiment::SplitPlan& plan) {
    const auto keep = training_tile_ids(assignment, plan);
    raster::TileSet out;
    out.side = tiles.side;
    for (const auto& t : tiles.tiles) {
        if (keep.count(t.id) != 0) {
            out.tiles.push_back(t);
        }
    }
    return out;
}

void write_manifest(const fs::path& dir, const std::string& stage, const config::RunConfig& config,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                    const fs::path& relative_to) {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["config_hash"] = config::config_hash(config);
    nlohmann::ordered_json seeds;
    for (const auto& [name, value] : config::seeds(config)) {
        seeds[name] = value;
    }
    j["seeds"] = seeds;
    auto digests = [&](const std::vector<fs::path>& paths) {
        auto list = nlohmann::ordered_json::array();
        for (const auto& p : paths) {
            list.push_back({{"path", fs::relative(p, relative_to).generic_string()}, {"sha256", io::file_sha256(p)}});
        }
        return list;
    };
    j["inputs"] = digests(inputs);
    j["outputs"] = digests(outputs);
    j["config"] = config::format_config(config);
    io::write_text_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

void apply_runtime(const config::RunConfig& config) {
    set_thread_count(config.threads);
    const auto& l = config.log_level;
    log::set_level(l == "debug" ? log::Level::debug
                   : l == "warn"  ? log::Level::warn
                   : l == "error" ? log::Level::error
                                  : log::Level::info);
}

void run_synth(const config::RunConfig& config, const fs::path& out_dir) {
    const auto scene = landscape::generate_scene(config.scene);
    landscape::write_scene(scene, out_dir);
    const auto in = IngestInputs::from_scene(out_dir);
    write_manifest(out_dir, "synth", config, {},
                   {in.surface, in.terrain, in.areas, in.indices, out_dir / "archetypes.csv"}, out_dir);
    log::info("synth: {} areas, {}x{} cells", scene.areas.size(), scene.grid.geometry().rows, scene.grid.geometry().cols);
}

void run_ingest(const config::RunConfig& config, const IngestInputs& inputs, const Layout& layout) {
    require_file(inputs.surface, "surface raster");
    require_file(inputs.terrain, "terrain raster");
    require_file(inputs.areas, "area polygons");
    require_file(inputs.indices, "index table");
    const auto grid = raster::normalize_elevation(raster::load_raster(inputs.surface), raster::load_raster(inputs.terrain));
    auto tiles = raster::tile_grid(grid, config.tile_side, config.nodata_policy);
    if (config.input_side != config.tile_side) {
        tiles = raster::downsample(tiles, config.input_side);
    }
    const auto areas = raster::load_areas(inputs.areas);
    for (const auto& a : areas) {
        raster::validate_area(a);
    }
    const auto assignment = raster::assign_by_centroid(tiles, areas);
    const auto plan = experiment::build_split(areas, config.test_group, config.val_group, config.split_seed);
    const auto indices_text = io::read_text(inputs.indices);
    const auto indices = experiment::parse_indices_csv(indices_text, inputs.indices.string());
    for (const auto& a : areas) {
        require(indices.values.count(a.id) == 1, ErrorKind::schema,
                fmt::format("{}: area '{}' has no index row", inputs.indices.string(), a.id));
    }

    fs::create_directories(layout.ingest());
    raster::save_tile_store(tiles, layout.tile_store());
    io::write_text_atomic(layout.assignment(), raster::format_assignment_csv(assignment));
    io::write_text_atomic(layout.split(), experiment::format_split_json(plan));
    io::write_text_atomic(layout.indices(), experiment::format_indices_csv(indices));
    write_manifest(layout.ingest(), "ingest", config, {inputs.surface, inputs.terrain, inputs.areas, inputs.indices},
                   {layout.tile_store(), layout.assignment(), layout.split(), layout.indices()}, layout.root);
    log::info("ingest: {} tiles ({} unassigned), split {}/{}/{}", tiles.tiles.size(), assignment.unassigned.size(),
              plan.train.size(), plan.val.size(), plan.test.size());
}

void run_train(const config::RunConfig& config, const Layout& layout) {
    const auto tiles = load_tiles(layout);
    const auto train = training_tiles(tiles, load_assignment(layout), load_split(layout));
    log::info("train: {} training tiles, {} epochs", train.tiles.size(), config.contrastive.epochs);
    const auto initial = encoder::EncoderModel::initialize(config.encoder, config.encoder_seed);
    const auto result = contrastive::train_simclr(train, initial, config.augment, config.contrastive);
    fs::create_directories(layout.train());
    encoder::save_weights(result.model, layout.weights());
    const auto loss = layout.train() / "loss.csv";
    io::write_text_atomic(loss, contrastive::format_loss_trace_csv(result.epoch_loss));
    write_manifest(layout.train(), "train", config, {layout.tile_store(), layout.assignment(), layout.split()},
                   {layout.weights(), loss}, layout.root);
}

void run_embed(const config::RunConfig& config, const Layout& layout) {
    const auto tiles = load_tiles(layout);
    fs::create_directories(layout.reps());
    std::vector<fs::path> inputs{layout.tile_store()};
    std::vector<fs::path> outputs;
    for (const auto& label : config.sources) {
        const auto [source, layer] = experiment::split_source_label(label);
        encoder::RepresentationMatrix reps;
        if (source == "external") {
            require(!config.external_features.empty(), ErrorKind::configuration,
                    "source 'external' needs embedding.external_features");
            const fs::path path = config.external_features;
            require_file(path, "external feature table");
            inputs.push_back(path);
            const auto aligned = encoder::align_to_tiles(encoder::import_external_features(path), tiles);
            if (!aligned.missing_features.empty()) {
                log::warn("external features: {} tiles have no feature row", aligned.missing_features.size());
            }
            if (!aligned.unknown_tiles.empty()) {
                log::warn("external features: {} rows name unknown tiles", aligned.unknown_tiles.size());
            }
            reps = aligned.matrix;
        } else {
            const auto tap = encoder::parse_layer_tap(layer);
            if (source == "simclr") {
                require_file(layout.weights(), "trained encoder weights (run train first)");
                inputs.push_back(layout.weights());
                reps = contrastive::extract_representations(encoder::load_weights(layout.weights()), tiles, tap);
            } else {
                const auto model = encoder::EncoderModel::initialize(config.encoder, config.random_encoder_seed);
                reps = contrastive::extract_representations(model, tiles, tap);
            }
        }
        const auto out = layout.representations(label);
        io::write_text_atomic(out, encoder::format_representations_csv(reps));
        outputs.push_back(out);
        log::info("embed: {} -> {} x {}", label, reps.values.rows(), reps.values.cols());
    }
    std::sort(inputs.begin(), inputs.end());
    inputs.erase(std::unique(inputs.begin(), inputs.end()), inputs.end());
    write_manifest(layout.reps(), "embed", config, inputs, outputs, layout.root);
}

void run_post(const config::RunConfig& config, const Layout& layout) {
    const auto train_ids = training_tile_ids(load_assignment(layout), load_split(layout));
    fs::create_directories(layout.post());
    std::vector<fs::path> inputs{layout.assignment(), layout.split()};
    std::vector<fs::path> outputs;
    for (const auto& label : config.sources) {
        const auto reps = load_reps(layout, label);
        inputs.push_back(layout.representations(label));
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < reps.tile_ids.size(); ++i) {
            if (train_ids.count(reps.tile_ids[i]) != 0) {
                rows.push_back(static_cast<Eigen::Index>(i));
            }
        }
        Eigen::MatrixXd train(static_cast<Eigen::Index>(rows.size()), reps.values.cols());
        std::vector<std::uint64_t> train_tile_ids;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            train.row(static_cast<Eigen::Index>(r)) = reps.values.row(rows[r]);
            train_tile_ids.push_back(reps.tile_ids[static_cast<std::size_t>(rows[r])]);
        }
        std::string silhouette_csv = "K,silhouette,pca_components\n";
        for (auto k : config.sizes) {
            const auto pipeline =
                embedding::fit_pipeline(train, k, derive_seed(config.kmeans_seed, k), config.kmeans, config.variance_target);
            embedding::save_pipeline(pipeline, layout.pipeline(label, k));
            const auto tile_embeddings = embedding::transform(reps, pipeline);
            io::write_text_atomic(layout.embeddings(label, k), embedding::format_embeddings_csv(tile_embeddings));
            outputs.push_back(layout.pipeline(label, k));
            outputs.push_back(layout.embeddings(label, k));

            const auto points = embedding::pca_points(train, pipeline);
            const auto train_embeddings = embedding::distance_embeddings(train_tile_ids, points, pipeline.kmeans.centroids);
            std::vector<std::size_t> labels;
            for (const auto& e : train_embeddings) {
                labels.push_back(e.cluster);
            }
            std::set<std::size_t> distinct(labels.begin(), labels.end());
            const double score = distinct.size() >= 2 ? embedding::silhouette(points, labels) : 0.0;
            silhouette_csv += fmt::format("{},{},{}\n", k, io::format_double(score), pipeline.pca.n_components);
            log::info("post: {} K={} pca={} silhouette={:.4f}", label, k, pipeline.pca.n_components, score);
        }
        io::write_text_atomic(layout.silhouette(label), silhouette_csv);
        outputs.push_back(layout.silhouette(label));
    }
    write_manifest(layout.post(), "post", config, inputs, outputs, layout.root);
}

void run_pool(const config::RunConfig& config, const Layout& layout) {
    const auto assignment = load_assignment(layout);
    const auto area_ids = all_area_ids(load_split(layout));
    fs::create_directories(layout.pooled());
    std::vector<fs::path> inputs{layout.assignment(), layout.split()};
    std::vector<fs::path> outputs;
    std::vector<aggregate::PooledFeatures> last;
    for (const auto& label : config.sources) {
        const auto [source, layer] = experiment::split_source_label(label);
        for (auto k : config.sizes) {
            const auto tile_embeddings = load_embeddings(layout, label, k);
            inputs.push_back(layout.embeddings(label, k));
            for (const auto& name : config.poolings) {
                const auto method = aggregate::parse_pool_method(name);
                last = aggregate::pool(tile_embeddings, assignment, area_ids, method);
                const auto out = layout.pooled_table(experiment::feature_key(source, layer, k, method));
                io::write_text_atomic(out, aggregate::format_pooled_csv(last));
                outputs.push_back(out);
            }
        }
    }
    const auto cov = aggregate::coverage(last, assignment.unassigned.size());
    if (!cov.empty_areas.empty()) {
        log::warn("pool: {} areas have no tiles and are excluded from modelling", cov.empty_areas.size());
    }
    const auto cov_path = layout.pooled() / "coverage.json";
    io::write_text_atomic(cov_path, aggregate::format_coverage_json(cov));
    outputs.push_back(cov_path);
    write_manifest(layout.pooled(), "pool", config, inputs, outputs, layout.root);
}

std::vector<experiment::ResultRow> run_evaluate(const config::RunConfig& config, const Layout& layout) {
    const auto plan = load_split(layout);
    require_file(layout.indices(), "index table (run ingest first)");
    const auto indices = experiment::parse_indices_csv(io::read_text(layout.indices()), layout.indices().string());
    std::vector<fs::path> inputs{layout.split(), layout.indices()};

    std::vector<experiment::Subset> subsets;
    for (const auto& s : config.subsets) {
        subsets.push_back(experiment::parse_subset(s));
    }
    std::vector<aggregate::PoolMethod> poolings;
    for (const auto& p : config.poolings) {
        poolings.push_back(aggregate::parse_pool_method(p));
    }
    std::vector<experiment::ModelKind> models;
    for (const auto& m : config.models) {
        models.push_back(experiment::parse_model_kind(m));
    }
    for (const auto& d : config.domains) {
        indices.column(d);
    }

    experiment::PooledTables pooled;
    for (const auto& label : config.sources) {
        const auto [source, layer] = experiment::split_source_label(label);
        for (auto k : config.sizes) {
            require_file(layout.pipeline(label, k), fmt::format("fitted pipeline for {} K={} (run post first)", label, k));
            inputs.push_back(layout.pipeline(label, k));
            for (auto method : poolings) {
                const auto key = experiment::feature_key(source, layer, k, method);
                const auto path = layout.pooled_table(key);
                require_file(path, fmt::format("pooled features {} (run pool first)", key));
                inputs.push_back(path);
                pooled.emplace(key, aggregate::parse_pooled_csv(io::read_text(path), path.string()));
            }
        }
    }

    experiment::ModelSettings settings;
    settings.lasso.n_alphas = config.lasso_alphas;
    settings.lasso.folds = config.lasso_folds;
    settings.gbm.n_trials = config.gbm_trials;
    settings.gbm.n_rounds_max = config.gbm_rounds;
    settings.gbm.patience = config.gbm_patience;

    const auto specs = experiment::expand_grid(config.domains, subsets, config.sources, config.sizes, poolings, models,
                                               config.model_seed);
    log::info("evaluate: {} grid cells", specs.size());
    auto rows = experiment::run_grid(specs, indices, pooled, plan, settings);

    const auto dir = layout.evaluate();
    experiment::write_reports(rows, dir);
    fs::create_directories(dir / "models");
    std::vector<fs::path> outputs{dir / "results.csv", dir / "predictions.csv"};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].failed) {
            const auto path = dir / "models" / fmt::format("cell_{:04}.json", i);
            io::write_text_atomic(path, rows[i].model_json);
            outputs.push_back(path);
        }
    }
    std::size_t failed = 0;
    for (const auto& r : rows) {
        failed += r.failed ? 1 : 0;
    }
    if (failed > 0) {
        log::warn("evaluate: {} of {} grid cells failed", failed, rows.size());
    }
    write_manifest(dir, "evaluate", config, inputs, outputs, layout.root);
    return rows;
}

void run_interpret(const config::RunConfig& config, const Layout& layout) {
    const auto& label = config.interpret_source;
    require(std::find(config.sources.begin(), config.sources.end(), label) != config.sources.end(),
            ErrorKind::configuration, fmt::format("interpret.source '{}' is not among embedding.sources", label));
    require_file(layout.silhouette(label), fmt::format("silhouette scores for {} (run post first)", label));
    const auto sil_table = io::parse_csv(io::read_text(layout.silhouette(label)), layout.silhouette(label).string());
    std::vector<interpret::SilhouetteScore> scores;
    for (std::size_t i = 0; i < sil_table.rows.size(); ++i) {
        const auto where = fmt::format("{} line {}", layout.silhouette(label).string(), sil_table.line_numbers[i]);
        scores.push_back({static_cast<std::size_t>(io::parse_int(sil_table.rows[i].at(0), where)),
                          io::parse_double(sil_table.rows[i].at(1), where)});
    }
    const std::size_t k = interpret::select_k(scores);

    const auto tiles = load_tiles(layout);
    const auto assignment = load_assignment(layout);
    const auto plan = load_split(layout);
    const auto indices = experiment::parse_indices_csv(io::read_text(layout.indices()), layout.indices().string());
    const auto tile_embeddings = load_embeddings(layout, label, k);
    const auto mean_pooled =
        aggregate::pool(tile_embeddings, assignment, all_area_ids(plan), aggregate::PoolMethod::mean);
    const auto areas = interpret::area_cluster_representation(mean_pooled);
    auto profiles = interpret::cluster_index_profile(areas, indices, k);
    interpret::attach_tiles(profiles, tile_embeddings, config.representatives, config.interpret_seed);

    const auto dir = layout.interpret();
    fs::create_directories(dir);
    io::write_text_atomic(dir / "profiles.csv", interpret::format_profiles_csv(profiles, indices.names));
    io::write_text_atomic(dir / "area_clusters.csv", interpret::format_area_representation_csv(areas));
    nlohmann::ordered_json sil;
    sil["source"] = label;
    sil["selected_k"] = k;
    auto list = nlohmann::ordered_json::array();
    for (const auto& s : scores) {
        list.push_back({{"K", s.k}, {"silhouette", s.score}});
    }
    sil["scores"] = list;
    io::write_text_atomic(dir / "silhouette.json", sil.dump(2) + "\n");
    interpret::write_panels(profiles, tiles, dir / "panels");
    write_manifest(dir, "interpret", config,
                   {layout.silhouette(label), layout.embeddings(label, k), layout.tile_store(), layout.indices()},
                   {dir / "profiles.csv", dir / "area_clusters.csv", dir / "silhouette.json", dir / "panels" / "panels.json"},
                   layout.root);
    log::info("interpret: {} selected K={} by silhouette", label, k);
}

void run_report(const config::RunConfig& config, const Layout& layout) {
    const auto results_path = layout.evaluate() / "results.csv";
    require_file(results_path, "results table (run evaluate first)");
    const auto results = io::read_csv(results_path);
    const auto dir = layout.report();
    fs::create_directories(dir);

    nlohmann::ordered_json summary;
    summary["config_hash"] = config::config_hash(config);
    const auto loss_path = layout.train() / "loss.csv";
    if (fs::exists(loss_path)) {
        const auto loss = io::read_csv(loss_path);
        if (!loss.rows.empty()) {
            summary["final_contrastive_loss"] = io::parse_double(loss.rows.back().at(1), loss_path.string());
        }
    }
    if (fs::exists(layout.split())) {
        const auto plan = load_split(layout);
        summary["split"] = {{"train", plan.train.size()}, {"val", plan.val.size()}, {"test", plan.test.size()},
                            {"test_group", plan.test_group}, {"val_group", plan.val_group}};
    }
    const auto col = [&](const char* name) { return results.column(name); };
    auto best = nlohmann::ordered_json::object();
    std::size_t failed = 0;
    for (std::size_t i = 0; i < results.rows.size(); ++i) {
        const auto& row = results.rows[i];
        if (row[col("test_rmse")].empty()) {
            ++failed;
            continue;
        }
        if (row[col("subset")] == "demographic") {
            continue;
        }
        const auto& domain = row[col("domain")];
        const double pct = io::parse_double(row[col("improvement_pct")], results_path.string());
        if (!best.contains(domain) || pct > best[domain]["improvement_pct"].get<double>()) {
            best[domain] = {{"subset", row[col("subset")]},
                            {"source", row[col("source")]},
                            {"layer", row[col("layer")]},
                            {"K", row[col("K")]},
                            {"pooling", row[col("pooling")]},
                            {"model", row[col("model")]},
                            {"test_rmse", io::parse_double(row[col("test_rmse")], results_path.string())},
                            {"improvement_pct", pct},
                            {"improvement_display", std::lround(pct)}};
        }
    }
    summary["grid_cells"] = results.rows.size();
    summary["failed_cells"] = failed;
    summary["best_by_domain"] = best;
    const auto sil_path = layout.interpret() / "silhouette.json";
    if (fs::exists(sil_path)) {
        summary["silhouette"] = nlohmann::json::parse(io::read_text(sil_path));
    }
    io::write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");

    std::vector<fs::path> outputs{dir / "summary.json"};
    for (const auto& src : {results_path, layout.interpret() / "profiles.csv", layout.interpret() / "area_clusters.csv"}) {
        if (fs::exists(src)) {
            const auto dst = dir / src.filename();
            io::write_text_atomic(dst, io::read_text(src));
            outputs.push_back(dst);
        }
    }
    write_manifest(dir, "report", config, {results_path}, outputs, layout.root);
}

void run_all(const config::RunConfig& config, const Layout& layout) {
    run_synth(config, layout.scene());
    run_ingest(config, IngestInputs::from_scene(layout.scene()), layout);
    run_train(config, layout);
    run_embed(config, layout);
    run_post(config, layout);
    run_pool(config, layout);
    run_evaluate(config, layout);
    run_interpret(config, layout);
    run_report(config, layout);
}

}  // namespace terrembed::workflow

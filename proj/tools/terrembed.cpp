// Command-line front end. Every subcommand reads and writes inside one run
// directory (--workdir) whose layout is fixed by workflow::Layout.

#include "terrembed/config.hpp"
#include "terrembed/error.hpp"
#include "terrembed/io.hpp"
#include "terrembed/log.hpp"
#include "terrembed/workflow.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <functional>
#include <optional>

namespace {

using namespace terrembed;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
    std::string config_path;
    std::string manifest_path;
    std::string workdir = "run";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

// Which seed --seed replaces for each subcommand.
void apply_seed(config::RunConfig& c, const std::string& command, std::uint64_t seed) {
    if (command == "synth" || command == "pipeline") {
        c.scene.seed = seed;
    } else if (command == "ingest") {
        c.split_seed = seed;
    } else if (command == "train") {
        c.contrastive.seed = seed;
    } else if (command == "embed") {
        c.random_encoder_seed = seed;
    } else if (command == "post") {
        c.kmeans_seed = seed;
    } else if (command == "evaluate" || command == "report") {
        c.model_seed = seed;
    } else if (command == "interpret") {
        c.interpret_seed = seed;
    } else {
        fail(ErrorKind::configuration, fmt::format("--seed is not used by '{}'", command));
    }
}

config::RunConfig resolve_config(const CommonOptions& opts, const std::string& command) {
    config::RunConfig c;
    require(opts.config_path.empty() || opts.manifest_path.empty(), ErrorKind::configuration,
            "--config and --manifest are mutually exclusive");
    if (!opts.config_path.empty()) {
        c = config::load_config(opts.config_path);
    } else if (!opts.manifest_path.empty()) {
        const auto text = io::read_text(opts.manifest_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::configuration, fmt::format("{}: {}", opts.manifest_path, e.what()));
        }
        require(j.contains("config") && j["config"].is_string(), ErrorKind::configuration,
                fmt::format("{}: manifest has no embedded config", opts.manifest_path));
        c = config::parse_config(j["config"].get<std::string>(), opts.manifest_path);
    }
    for (const auto& o : opts.overrides) {
        config::apply_override(c, o);
    }
    if (opts.seed) {
        apply_seed(c, command, *opts.seed);
    }
    if (opts.threads) {
        c.threads = *opts.threads;
    }
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive elevation-tile embeddings: synthesis, training, post-processing and evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "terrembed 1.0.0");

    CommonOptions opts;
    std::string scene_dir;
    workflow::IngestInputs ingest_inputs;
    std::string synth_out;

    struct Command {
        const char* name;
        const char* help;
    };
    const Command commands[] = {
        {"synth", "Generate a synthetic scene (rasters, areas, indices)"},
        {"ingest", "Normalise rasters, cut tiles, assign them to areas and plan the split"},
        {"train", "Contrastive pretraining of the encoder on training-split tiles"},
        {"embed", "Raw representations per configured source"},
        {"post", "Fit standardise/PCA/K-means pipelines and write tile embeddings"},
        {"pool", "Pool tile embeddings to area features"},
        {"evaluate", "Run the regression grid and write results and charts"},
        {"interpret", "Cluster profiles, area representations and tile panels"},
        {"report", "Consolidated summary bundle"},
        {"pipeline", "Run every stage in order"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& cmd : commands) {
        auto* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->add_option("-c,--config", opts.config_path, "Run configuration (TOML-style)")->check(CLI::ExistingFile);
        sub->add_option("-m,--manifest", opts.manifest_path, "Reuse the configuration embedded in a run manifest")
            ->check(CLI::ExistingFile);
        sub->add_option("-w,--workdir", opts.workdir, "Run directory")->capture_default_str();
        sub->add_option("--set", opts.overrides, "Override a key: section.key=value")->allow_extra_args(false);
        sub->add_option("--seed", opts.seed, "Replace the seed owned by this stage");
        sub->add_option("--threads", opts.threads, "Worker thread cap (0 = all cores)");
        subs[cmd.name] = sub;
    }
    subs["synth"]->add_option("-o,--out", synth_out, "Output directory (default <workdir>/scene)");
    auto* ingest = subs["ingest"];
    ingest->add_option("--scene", scene_dir, "Directory holding surface.asc, terrain.asc, areas.geojson, indices.csv");
    ingest->add_option("--surface", ingest_inputs.surface, "Surface elevation ASCII grid");
    ingest->add_option("--terrain", ingest_inputs.terrain, "Bare-earth elevation ASCII grid");
    ingest->add_option("--areas", ingest_inputs.areas, "Area polygons (GeoJSON)");
    ingest->add_option("--indices", ingest_inputs.indices, "Area index table (CSV)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    std::string command;
    for (const auto& [name, sub] : subs) {
        if (sub->parsed()) {
            command = name;
        }
    }

    config::RunConfig cfg;
    try {
        cfg = resolve_config(opts, command);
    } catch (const Error& e) {
        std::fprintf(stderr, "terrembed: error: %s\n", e.what());
        return kExitUsage;
    }

    try {
        workflow::apply_runtime(cfg);
        const workflow::Layout layout{opts.workdir};
        std::filesystem::create_directories(layout.root);
        if (command == "synth") {
            workflow::run_synth(cfg, synth_out.empty() ? layout.scene() : std::filesystem::path(synth_out));
        } else if (command == "ingest") {
            auto inputs = workflow::IngestInputs::from_scene(scene_dir.empty() ? layout.scene() : std::filesystem::path(scene_dir));
            for (auto [given, target] : {std::pair{&ingest_inputs.surface, &inputs.surface},
                                         std::pair{&ingest_inputs.terrain, &inputs.terrain},
                                         std::pair{&ingest_inputs.areas, &inputs.areas},
                                         std::pair{&ingest_inputs.indices, &inputs.indices}}) {
                if (!given->empty()) {
                    *target = *given;
                }
            }
            workflow::run_ingest(cfg, inputs, layout);
        } else if (command == "train") {
            workflow::run_train(cfg, layout);
        } else if (command == "embed") {
            workflow::run_embed(cfg, layout);
        } else if (command == "post") {
            workflow::run_post(cfg, layout);
        } else if (command == "pool") {
            workflow::run_pool(cfg, layout);
        } else if (command == "evaluate") {
            workflow::run_evaluate(cfg, layout);
        } else if (command == "interpret") {
            workflow::run_interpret(cfg, layout);
        } else if (command == "report") {
            workflow::run_report(cfg, layout);
        } else {
            workflow::run_all(cfg, layout);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "terrembed: error: %s\n", e.what());
        return e.kind() == ErrorKind::missing_input ? kExitUsage : kExitFailure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "terrembed: error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitOk;
}

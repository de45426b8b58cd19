#include "terrembed/io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using terrembed::io::file_sha256;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(TERREMBED_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("terrembed_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("synth with a fixed seed is byte-identical across runs") {
    const auto a = scratch("synth_a");
    const auto b = scratch("synth_b");
    const std::string small = " --set scene.areas_x=2 --set scene.areas_y=2 --set scene.area_side=64 --set tiles.side=32"
                              " --set tiles.input_side=16 --set scene.group_block=1";
    REQUIRE(run("synth --seed 7 -o " + a.string() + small) == 0);
    REQUIRE(run("synth --seed 7 -o " + b.string() + small) == 0);
    for (const char* f : {"surface.asc", "terrain.asc", "areas.geojson", "indices.csv"}) {
        CHECK(file_sha256(a / f) == file_sha256(b / f));
    }
}

TEST_CASE("exit codes for usage, configuration and missing inputs") {
    const auto empty = scratch("empty");
    fs::create_directories(empty);
    CHECK(run("evaluate -w " + empty.string()) == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("synth --set scene.nonsense=1 -o " + empty.string()) == 2);
    CHECK(run("--help") == 0);
}

TEST_CASE("demo pipeline produces one result row per grid cell") {
    const auto dir = scratch("demo");
    REQUIRE(run(std::string("pipeline -c ") + TERREMBED_DEMO_CONFIG + " -w " + dir.string()) == 0);
    const auto csv = terrembed::io::read_csv(dir / "evaluate" / "results.csv");
    // 2 domains x 3 subsets x 2 sources x 2 sizes x 2 poolings x 2 models
    CHECK(csv.rows.size() == 96);
    for (const char* f : {"report/summary.json", "interpret/profiles.csv", "post/manifest.json", "train/encoder.bin"}) {
        CHECK(fs::exists(dir / f));
    }
    const auto manifest = terrembed::io::read_text(dir / "evaluate" / "manifest.json");
    CHECK(manifest.find("config_hash") != std::string::npos);
    // A second run from the recorded manifest reproduces the results byte for byte.
    const auto again = scratch("demo_again");
    REQUIRE(run("pipeline -m " + (dir / "evaluate" / "manifest.json").string() + " -w " + again.string()) == 0);
    CHECK(terrembed::io::file_sha256(dir / "evaluate" / "results.csv") ==
          terrembed::io::file_sha256(again / "evaluate" / "results.csv"));
    fs::remove_all(dir);
    fs::remove_all(again);
}

#include "terrembed/error.hpp"
#include "terrembed/experiment.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <cmath>
#include <set>

using namespace terrembed;
using namespace terrembed::experiment;

namespace {

std::vector<raster::AreaUnit> make_areas(std::size_t n, std::size_t test_group_size, std::size_t val_group_size) {
    std::vector<raster::AreaUnit> areas;
    for (std::size_t i = 0; i < n; ++i) {
        std::string group = "g_other" + std::to_string(i % 5);
        if (i < test_group_size) {
            group = "g_test";
        } else if (i < test_group_size + val_group_size) {
            group = "g_val";
        }
        const double x = static_cast<double>(i);
        areas.push_back({fmt::format("a{:03}", i), {{x, 0}, {x + 1, 0}, {x + 1, 1}, {x, 1}}, group});
    }
    return areas;
}

IndexTable make_indices(const std::vector<raster::AreaUnit>& areas, std::uint64_t seed) {
    IndexTable t;
    t.names = {"i0", "i1", "i2", "i3", "i4", "i5", "i6"};
    Rng rng(seed);
    for (const auto& a : areas) {
        std::vector<double> v(7);
        for (auto& x : v) {
            x = rng.normal();
        }
        v[0] = v[1] + 0.5 * v[2] + 0.1 * rng.normal();
        t.values[a.id] = v;
    }
    return t;
}

std::vector<aggregate::PooledFeatures> make_pooled(const std::vector<raster::AreaUnit>& areas, std::size_t k,
                                                   const IndexTable& idx, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<aggregate::PooledFeatures> out;
    for (const auto& a : areas) {
        std::vector<double> v(k);
        for (auto& x : v) {
            x = rng.uniform(0, 3);
        }
        v[0] = 2.0 - idx.values.at(a.id)[0];
        out.push_back({a.id, aggregate::PoolMethod::mean, 1, v});
    }
    return out;
}

}  // namespace

TEST_CASE("hold-out quota arithmetic") {
    CHECK(holdout_quota(100) == 20);
    CHECK(holdout_quota(256) == 51);
    CHECK(random_fill_share(0.46) == doctest::Approx(0.54));
}

TEST_CASE("build_split: group plus random fill, disjoint and exhaustive") {
    const auto areas = make_areas(100, 9, 6);
    const auto plan = build_split(areas, "g_test", "g_val", 3);
    CHECK(plan.test.size() == 20);
    CHECK(plan.val.size() == 20);
    CHECK(plan.train.size() == 60);
    CHECK(plan.test_group_areas == 9);
    CHECK(plan.val_group_areas == 6);
    std::set<std::string> all;
    all.insert(plan.train.begin(), plan.train.end());
    all.insert(plan.val.begin(), plan.val.end());
    all.insert(plan.test.begin(), plan.test.end());
    CHECK(all.size() == 100);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(plan.split_of(areas[i].id) == std::optional<std::string>("test"));
    }
    for (std::size_t i = 9; i < 15; ++i) {
        CHECK(plan.split_of(areas[i].id) == std::optional<std::string>("val"));
    }
    const auto again = build_split(areas, "g_test", "g_val", 3);
    CHECK(again.test == plan.test);
    CHECK(again.val == plan.val);
    const auto back = parse_split_json(format_split_json(plan));
    CHECK(back.train == plan.train);
    CHECK(back.test_group == "g_test");
}

TEST_CASE("build_split rejects oversized, unknown and identical groups") {
    const auto big = make_areas(100, 25, 5);
    try {
        build_split(big, "g_test", "g_val", 1);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::configuration);
    }
    const auto ok = make_areas(100, 5, 5);
    CHECK_THROWS_AS(build_split(ok, "g_nope", "g_val", 1), Error);
    CHECK_THROWS_AS(build_split(ok, "g_val", "g_val", 1), Error);
}

TEST_CASE("improvement arithmetic and display rounding") {
    CHECK(std::lround(improvement_pct(11.9, 10.8)) == 9);
    CHECK(std::lround(improvement_pct(11.2, 8.9)) == 21);
    CHECK(improvement_pct(5.0, 5.0) == 0.0);
    ResultRow r;
    r.improvement_pct = improvement_pct(11.2, 8.9);
    CHECK(r.display_improvement() == 21);
}

TEST_CASE("feature widths per subset") {
    const auto areas = make_areas(50, 3, 3);
    const auto plan = build_split(areas, "g_test", "g_val", 1);
    const auto idx = make_indices(areas, 2);
    const auto pooled = make_pooled(areas, 512, idx, 3);
    ExperimentSpec spec{"i0", Subset::combined, "simclr", "L1", 512, aggregate::PoolMethod::mean, ModelKind::lasso, 1};
    CHECK(assemble_features(spec, idx, &pooled, plan).train.x.cols() == 518);
    spec.subset = Subset::embedding;
    CHECK(assemble_features(spec, idx, &pooled, plan).train.x.cols() == 512);
    spec.subset = Subset::demographic;
    const auto demo = assemble_features(spec, idx, nullptr, plan);
    CHECK(demo.train.x.cols() == 6);
    CHECK(demo.train.y.minCoeff() == doctest::Approx(0.0));
    CHECK(demo.train.y.maxCoeff() == doctest::Approx(100.0));
    spec.domain = "missing";
    try {
        assemble_features(spec, idx, nullptr, plan);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::schema);
    }
}

TEST_CASE("areas without pooled features are dropped") {
    const auto areas = make_areas(50, 3, 3);
    const auto plan = build_split(areas, "g_test", "g_val", 1);
    const auto idx = make_indices(areas, 2);
    auto pooled = make_pooled(areas, 4, idx, 3);
    pooled[10].tile_count = 0;
    pooled[10].vector.clear();
    pooled.erase(pooled.begin() + 20);
    ExperimentSpec spec{"i0", Subset::embedding, "simclr", "L1", 4, aggregate::PoolMethod::mean, ModelKind::lasso, 1};
    const auto d = assemble_features(spec, idx, &pooled, plan);
    CHECK(d.dropped.size() == 2);
    CHECK(d.train.x.rows() + d.val.x.rows() + d.test.x.rows() == 48);
}

TEST_CASE("grid expansion order and cardinality") {
    const auto specs = expand_grid({"a", "b", "c"}, {Subset::demographic, Subset::embedding, Subset::combined},
                                   {"simclr-L1", "random-encoder-L1"}, {4, 8, 16, 32},
                                   {aggregate::PoolMethod::mean, aggregate::PoolMethod::max},
                                   {ModelKind::lasso, ModelKind::gbm}, 1);
    CHECK(specs.size() == 3 * 3 * 2 * 4 * 2 * 2);
    CHECK(specs[0].model == ModelKind::lasso);
    CHECK(specs[1].model == ModelKind::gbm);
    CHECK(specs[2].pooling == aggregate::PoolMethod::max);
    CHECK(specs.back().domain == "c");
    CHECK(split_source_label("random-encoder-L2") == std::pair<std::string, std::string>{"random-encoder", "L2"});
    CHECK(split_source_label("external") == std::pair<std::string, std::string>{"external", ""});
    CHECK(source_label("simclr", "L3") == "simclr-L3");
    CHECK(feature_key("simclr", "L1", 8, aggregate::PoolMethod::max) == "simclr-L1_K8_max");
}

TEST_CASE("run_grid: one row per spec, self-comparison zero, stored improvement recomputes exactly") {
    const auto areas = make_areas(60, 4, 4);
    const auto plan = build_split(areas, "g_test", "g_val", 5);
    const auto idx = make_indices(areas, 6);
    PooledTables tables;
    tables["simclr-L1_K4_mean"] = make_pooled(areas, 4, idx, 7);
    const auto specs = expand_grid({"i0", "i3"}, {Subset::demographic, Subset::embedding, Subset::combined},
                                   {"simclr-L1"}, {4}, {aggregate::PoolMethod::mean},
                                   {ModelKind::lasso, ModelKind::gbm}, 11);
    ModelSettings settings;
    settings.lasso.n_alphas = 20;
    settings.gbm.n_trials = 3;
    settings.gbm.n_rounds_max = 60;
    settings.gbm.patience = 5;
    const auto rows = run_grid(specs, idx, tables, plan, settings);
    REQUIRE(rows.size() == specs.size());
    std::map<std::pair<std::string, ModelKind>, double> demo;
    for (const auto& r : rows) {
        CHECK_FALSE(r.failed);
        if (r.spec.subset == Subset::demographic) {
            CHECK(r.improvement_pct == 0.0);
            demo[{r.spec.domain, r.spec.model}] = r.test_rmse;
        }
    }
    for (const auto& r : rows) {
        CHECK(r.improvement_pct == improvement_pct(demo.at({r.spec.domain, r.spec.model}), r.test_rmse));
    }
    const auto rerun = run_grid(specs, idx, tables, plan, settings);
    CHECK(format_results_csv(rerun) == format_results_csv(rows));
    const auto csv = format_results_csv(rows);
    CHECK(csv.rfind("domain,subset,source,layer,K,pooling,model,val_rmse,test_rmse,improvement_pct\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == rows.size() + 1);
}

TEST_CASE("a failing cell is marked failed and the grid continues") {
    const auto areas = make_areas(60, 4, 4);
    const auto plan = build_split(areas, "g_test", "g_val", 5);
    const auto idx = make_indices(areas, 6);
    PooledTables tables;  // no pooled tables at all
    const auto specs = expand_grid({"i0"}, {Subset::demographic, Subset::embedding}, {"simclr-L1"}, {4},
                                   {aggregate::PoolMethod::mean}, {ModelKind::lasso}, 1);
    ModelSettings settings;
    settings.lasso.n_alphas = 10;
    const auto rows = run_grid(specs, idx, tables, plan, settings);
    REQUIRE(rows.size() == 2);
    CHECK_FALSE(rows[0].failed);
    CHECK(rows[1].failed);
    CHECK_FALSE(rows[1].error.empty());
}

TEST_CASE("index csv round-trip and box plot output") {
    const auto areas = make_areas(5, 1, 1);
    const auto idx = make_indices(areas, 1);
    const auto back = parse_indices_csv(format_indices_csv(idx), "i.csv");
    CHECK(back.names == idx.names);
    CHECK(back.values == idx.values);
    CHECK_THROWS_AS(back.column("zz"), Error);
    const auto svg = box_plot_svg("t", "y", {{"mean", {1, 2, 3, 4}}, {"max", {-1, 0, 5}}});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("mean") != std::string::npos);
    CHECK(parse_subset("combined") == Subset::combined);
    CHECK(parse_model_kind("gbm") == ModelKind::gbm);
}

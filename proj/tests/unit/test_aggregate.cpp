#include "terrembed/aggregate.hpp"
#include "terrembed/error.hpp"

#include <doctest.h>

using namespace terrembed;
using namespace terrembed::aggregate;
using embedding::TileEmbedding;

namespace {

raster::TileAssignment assignment_of(std::map<std::uint64_t, std::string> m) {
    raster::TileAssignment a;
    a.area_of = std::move(m);
    return a;
}

}  // namespace

TEST_CASE("mean and max pooling of two tiles") {
    const std::vector<TileEmbedding> e{{1, 0, {1, 3}}, {2, 1, {3, 5}}};
    const auto asg = assignment_of({{1, "A"}, {2, "A"}});
    const auto mean = pool(e, asg, {"A"}, PoolMethod::mean);
    const auto mx = pool(e, asg, {"A"}, PoolMethod::max);
    CHECK(mean[0].vector == std::vector<double>{2, 4});
    CHECK(mx[0].vector == std::vector<double>{3, 5});
    CHECK(mean[0].tile_count == 2);
}

TEST_CASE("a singleton area pools to its tile under both methods") {
    const std::vector<TileEmbedding> e{{4, 0, {0.7, 1.9, 2.0}}};
    const auto asg = assignment_of({{4, "B"}});
    for (auto m : {PoolMethod::mean, PoolMethod::max}) {
        CHECK(pool(e, asg, {"B"}, m)[0].vector == e[0].distances);
    }
}

TEST_CASE("areas without tiles are reported missing and unassigned tiles are ignored") {
    const std::vector<TileEmbedding> e{{1, 0, {1, 2}}, {2, 0, {5, 6}}};
    const auto asg = assignment_of({{1, "A"}});
    const auto out = pool(e, asg, {"A", "Z"}, PoolMethod::mean);
    REQUIRE(out.size() == 2);
    CHECK(out[0].vector == std::vector<double>{1, 2});
    CHECK(out[1].missing());
    CHECK(out[1].vector.empty());
    const auto cov = coverage(out, 1);
    CHECK(cov.areas == 2);
    CHECK(cov.covered == 1);
    CHECK(cov.empty_areas == std::vector<std::string>{"Z"});
    CHECK(format_coverage_json(cov).find("\"Z\"") != std::string::npos);
}

TEST_CASE("mean never exceeds max element-wise") {
    Rng rng(3);
    std::vector<TileEmbedding> e;
    std::map<std::uint64_t, std::string> m;
    for (std::uint64_t i = 0; i < 60; ++i) {
        e.push_back({i, 0, {rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 5)}});
        m[i] = "a" + std::to_string(i % 7);
    }
    std::vector<std::string> ids;
    for (int a = 0; a < 7; ++a) {
        ids.push_back("a" + std::to_string(a));
    }
    const auto mean = pool(e, assignment_of(m), ids, PoolMethod::mean);
    const auto mx = pool(e, assignment_of(m), ids, PoolMethod::max);
    for (std::size_t a = 0; a < ids.size(); ++a) {
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(mean[a].vector[k] <= mx[a].vector[k]);
        }
    }
}

TEST_CASE("mixed K is a dimension error") {
    const std::vector<TileEmbedding> e{{1, 0, {1, 2}}, {2, 0, {1, 2, 3}}};
    try {
        pool(e, assignment_of({{1, "A"}, {2, "A"}}), {"A"}, PoolMethod::mean);
        FAIL("expected error");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::dimension);
    }
}

TEST_CASE("pooled csv round-trips including missing areas") {
    const std::vector<TileEmbedding> e{{1, 0, {1.25, 1.0 / 3.0}}};
    const auto out = pool(e, assignment_of({{1, "A"}}), {"A", "B"}, PoolMethod::max);
    const auto back = parse_pooled_csv(format_pooled_csv(out), "p.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].vector == out[0].vector);
    CHECK(back[0].method == PoolMethod::max);
    CHECK(back[1].missing());
    CHECK(parse_pool_method("mean") == PoolMethod::mean);
    CHECK_THROWS_AS(parse_pool_method("median"), Error);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "leprompter/error.hpp"
#include "leprompter/promptgen.hpp"
#include "leprompter/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace leprompter;

namespace {

BinaryMask disc(int w, int h, double cx, double cy, double r) {
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r);
    return m;
}

bool on(const BinaryMask& m, Pixel p) { return m.in_bounds(p.x, p.y) && m.at(p.x, p.y); }

} // namespace

TEST_CASE("random points") {
    BinaryMask one(6, 6);
    one.set(2, 4, true);
    auto cs = dbscan(one, {1.5, 1});
    auto r = gen_random_points(one, cs, 9, 1);
    CHECK(r.prompt.points.size() == 1);
    CHECK(r.short_of_k);

    const auto m = disc(20, 20, 9, 9, 6);
    cs = dbscan(m);
    r = gen_random_points(m, cs, 3, 42);
    REQUIRE(r.prompt.points.size() == 3);
    CHECK_FALSE(r.short_of_k);
    std::set<std::pair<int, int>> uniq;
    for (auto p : r.prompt.points) {
        CHECK(on(m, p));
        uniq.insert({p.x, p.y});
    }
    CHECK(uniq.size() == 3);
    CHECK(gen_random_points(m, cs, 3, 42).prompt.points == r.prompt.points);
    CHECK_THROWS_AS(gen_random_points(m, cs, 0, 1), ContractError);
    CHECK_THROWS_AS(gen_random_points(m, cs, 10, 1), ContractError);
    CHECK_THROWS_AS(gen_random_points(m, {}, 3, 1), ContractError);
}

TEST_CASE("center points") {
    BinaryMask sq(9, 9);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) sq.set(x, y, true);
    auto cs = dbscan(sq);
    auto r = gen_center_points(sq, cs, 1, 3, 0);
    REQUIRE(r.prompt.points.size() == 1);
    CHECK(r.prompt.points[0] == Pixel{2, 2});

    // 100-pixel blob: a 10×10 square; compare against a sort-by-distance oracle.
    BinaryMask blob(16, 16);
    for (int y = 3; y < 13; ++y)
        for (int x = 2; x < 12; ++x) blob.set(x, y, true);
    cs = dbscan(blob);
    const auto got = gen_center_points(blob, cs, 9, 5, 0).prompt.points;
    std::vector<Pixel> all;
    double sx = 0, sy = 0;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            if (blob.at(x, y)) {
                all.push_back({x, y});
                sx += x;
                sy += y;
            }
    const double cx = sx / double(all.size()), cy = sy / double(all.size());
    std::vector<std::pair<double, int>> keyed;
    for (auto p : all) keyed.push_back({(p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy), p.y * 16 + p.x});
    std::sort(keyed.begin(), keyed.end());
    REQUIRE(got.size() == 9);
    for (int i = 0; i < 9; ++i) CHECK(got[std::size_t(i)].y * 16 + got[std::size_t(i)].x == keyed[std::size_t(i)].second);

    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const auto m = oracle::random_mask(rng, 16, 16, rng.uniform(0.05, 0.5));
        cs = dbscan(m);
        if (cs.empty()) continue;
        const auto pts = gen_center_points(m, cs, rng.uniform_int(1, 9), rng.next_u64(), 2).prompt.points;
        for (auto p : pts) CHECK(on(m, p));
    }
}

TEST_CASE("box prompt") {
    BinaryMask full(6, 5, std::vector<std::uint8_t>(30, 1));
    CHECK(*gen_box(dbscan(full)) == BoxPrompt{0, 0, 5, 4});
    BinaryMask one(8, 9);
    one.set(4, 7, true);
    CHECK(*gen_box(dbscan(one, {1.5, 1})) == BoxPrompt{4, 7, 4, 7});
    CHECK_FALSE(gen_box({}).has_value());

    Rng rng(32);
    for (int i = 0; i < 200; ++i) {
        const auto m = oracle::random_mask(rng, 16, 16, rng.uniform(0.05, 0.5));
        const auto cs = dbscan(m);
        const auto b = gen_box(cs);
        if (cs.empty()) {
            CHECK_FALSE(b.has_value());
            continue;
        }
        const auto all = cluster_union(cs);
        bool l = false, r = false, t = false, btm = false;
        for (auto p : all) {
            CHECK((p.x >= b->x_min && p.x <= b->x_max && p.y >= b->y_min && p.y <= b->y_max));
            l |= p.x == b->x_min;
            r |= p.x == b->x_max;
            t |= p.y == b->y_min;
            btm |= p.y == b->y_max;
        }
        CHECK((l && r && t && btm));
    }
}

TEST_CASE("unfilled and filled masks") {
    CHECK(unfilled_sample_count(125) == 1);
    CHECK(unfilled_sample_count(126) == 2);
    CHECK(unfilled_sample_count(1) == 1);
    CHECK(unfilled_sample_count(1000) == 8);

    MaskPrompt ring{MaskKind::Unfilled, BinaryMask(5, 5)};
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x) ring.raster.set(x, y, !(x == 2 && y == 2));
    const auto solid = gen_filled_mask(ring);
    CHECK(solid.kind == MaskKind::Filled);
    CHECK(solid.raster.count() == 9);
    CHECK_THROWS_AS(gen_filled_mask(solid), ContractError);
    CHECK_THROWS_AS(gen_unfilled_mask(BinaryMask(4, 4), 1), ContractError);

    Rng rng(33);
    for (int i = 0; i < 100; ++i) {
        const auto gt = disc(32, 32, rng.uniform(4, 28), rng.uniform(4, 28), rng.uniform(2, 12));
        if (gt.count() == 0) continue;
        const auto u = gen_unfilled_mask(gt, rng.next_u64());
        CHECK(u.sample_count == std::size_t(std::ceil(0.008 * double(gt.count()))));
        CHECK(u.prompt.raster.count() >= u.sample_count);
        std::size_t inter = 0, uni = 0;
        for (std::size_t k = 0; k < gt.size(); ++k) {
            inter += gt.data()[k] && u.prompt.raster.data()[k];
            uni += gt.data()[k] || u.prompt.raster.data()[k];
        }
        CHECK(inter > 0);
        CHECK(inter <= uni);
        const auto f = gen_filled_mask(u.prompt);
        CHECK(u.prompt.raster.subset_of(f.raster));
        CHECK(oracle::enclosed_count(f.raster) == 0);
    }
}

TEST_CASE("rasterize") {
    auto r = rasterize(PromptSet{}, 4, 4);
    CHECK(r.points.count() + r.box.count() + r.mask.count() == 0);
    CHECK_FALSE((r.has_points || r.has_box || r.has_mask));
    PromptSet p;
    p.points = PointPrompt{PointKind::Random, {{2, 2}}};
    CHECK(rasterize(p, 4, 4).points.count() == 1);
    for (auto [w, h] : {std::pair{2, 2}, std::pair{3, 5}, std::pair{1, 4}, std::pair{6, 1}}) {
        PromptSet b;
        b.box = BoxPrompt{1, 1, w, h};
        const std::size_t bw = std::size_t(w), bh = std::size_t(h);
        const std::size_t perimeter = (bw == 1 || bh == 1) ? bw * bh : 2 * (bw + bh) - 4;
        CHECK(rasterize(b, 8, 8).box.count() == perimeter);
    }
    PromptSet bad;
    bad.points = PointPrompt{PointKind::Random, {{4, 0}}};
    CHECK_THROWS_AS(rasterize(bad, 4, 4), ContractError);
    bad.points->points.assign(10, {0, 0});
    CHECK_THROWS_AS(validate_prompts(bad, 4, 4), ContractError);
}

TEST_CASE("benchmark build, determinism and manifest round trip") {
    SynthConfig sc;
    sc.count = 6;
    sc.seed = 2;
    auto scenes = gen_synthetic_dataset(sc);
    scenes.push_back({Image(32, 32), BinaryMask(32, 32), "empty"});
    BenchmarkConfig bc;
    bc.master_seed = 9;
    bc.jobs = 3;
    testutil::TempDir a, b;
    const auto ma = build_benchmark(scenes, bc, a.path());
    bc.jobs = 1;
    const auto mb = build_benchmark(scenes, bc, b.path());
    REQUIRE(ma.records.size() == 7);
    CHECK(manifest_to_json(ma) == manifest_to_json(mb));
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(a.path())) {
        ++files;
        CHECK(testutil::read_bytes(e.path()) == testutil::read_bytes(b / e.path().filename().string()));
    }
    CHECK(files == 6 * 5 + 1); // the empty scene writes no rasters

    const auto& empty = ma.records.back();
    CHECK(empty.flags == std::vector<std::string>{"empty_mask"});
    CHECK_FALSE(empty.box.has_value());
    CHECK(empty.points_random.empty());

    const auto loaded = load_manifest(a / "manifest.json");
    CHECK(manifest_to_json(loaded) == manifest_to_json(ma));
    for (std::size_t i = 0; i + 1 < loaded.records.size(); ++i) {
        CHECK(*loaded.records[i].mask_filled == *ma.records[i].mask_filled);
        CHECK(loaded.records[i].seed == derive_seed(9, scenes[i].id));
    }
    CHECK(loaded.find("scene_0003") != nullptr);
    CHECK(loaded.find("nope") == nullptr);

    testutil::write_bytes(a / "bad.json", "{\"format\": \"other\"}");
    CHECK_THROWS_AS(load_manifest(a / "bad.json"), FormatError);
    CHECK_THROWS_AS(load_manifest(a / "missing.json"), IoError);
    CHECK_THROWS_AS(build_benchmark({}, bc), ContractError);
}

TEST_CASE("prompt combinations") {
    auto c = parse_prompt_combination("random_points:3,box,unfilled_mask");
    CHECK(c.random_points);
    CHECK(c.point_count == 3);
    CHECK(c.box);
    CHECK(c.unfilled_mask);
    CHECK_FALSE(c.center_points);
    c = parse_prompt_combination("center_points");
    CHECK(c.center_points);
    CHECK(c.point_count == 3);
    CHECK_FALSE(parse_prompt_combination("none").any());
    CHECK_THROWS_AS(parse_prompt_combination("random_points:3,center_points:2"), ContractError);
    CHECK_THROWS_AS(parse_prompt_combination("filled_mask,unfilled_mask"), ContractError);
    CHECK_THROWS_AS(parse_prompt_combination("random_points:12"), ContractError);
    CHECK_THROWS_AS(parse_prompt_combination("box:2"), ContractError);
    CHECK_THROWS_AS(parse_prompt_combination("lasso"), ContractError);

    SynthConfig sc;
    sc.count = 1;
    const auto scenes = gen_synthetic_dataset(sc);
    const auto m = build_benchmark(scenes, {});
    const auto& rec = m.records[0];
    const auto ps = assemble_prompts(rec, parse_prompt_combination("random_points:2,box,filled_mask"));
    REQUIRE(ps.points.has_value());
    CHECK(ps.points->points.size() == 2);
    CHECK(ps.box == rec.box);
    CHECK(ps.mask->kind == MaskKind::Filled);
    const auto none = assemble_prompts(rec, parse_prompt_combination("none"));
    CHECK_FALSE((none.points || none.box || none.mask));
}

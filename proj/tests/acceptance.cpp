// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "leprompter/backbone.hpp"
#include "leprompter/promptgen.hpp"
#include "leprompter/rng.hpp"
#include "leprompter/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace leprompter;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and thresholds.
constexpr double kMorphologySeconds = 5.0;
constexpr double kIptbTolerance = 1e-6;
constexpr double kGradTolerance = 1e-4;
constexpr double kDecoderSeconds = 60.0;
constexpr double kEndToEndMiou = 80.0;
constexpr double kEndToEndSeconds = 15 * 60.0;
constexpr double kDirectionalSlack = 0.5;
constexpr double kMetricsTolerance = 0.01;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---- 1 -------------------------------------------------------------------
Outcome morphology_oracle() {
    const auto t0 = Clock::now();
    Rng rng(101);
    std::size_t mismatches = 0, masks = 0;
    for (int i = 0; i < 200; ++i) {
        const auto m = oracle::random_mask(rng, 12, 12, rng.uniform(0.1, 0.8));
        ++masks;
        for (int n : {3, 5}) {
            const auto se = StructuringElement::square(n);
            auto diff = [](const BinaryMask& a, const BinaryMask& b) {
                std::size_t d = 0;
                for (std::size_t k = 0; k < a.size(); ++k) d += a.data()[k] != b.data()[k];
                return d;
            };
            mismatches += diff(dilate(m, se), oracle::dilate(m, se));
            mismatches += diff(erode(m, se), oracle::erode(m, se));
            mismatches += diff(close(m, se), oracle::erode(oracle::dilate(m, se), se));
        }
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < kMorphologySeconds,
            std::to_string(masks) + " masks x 2 SEs, " + std::to_string(mismatches) + " pixel mismatches, " +
                fmt("%.2f s", secs)};
}

// ---- 2 -------------------------------------------------------------------
Outcome dbscan_oracle() {
    Rng rng(202);
    int differ = 0, cc_differ = 0;
    for (int min_pts : {1, 4})
        for (int i = 0; i < 100; ++i) {
            const auto m = oracle::random_mask(rng, 16, 16, rng.uniform(0.1, 0.6));
            const auto got = oracle::partition_of(dbscan(m, {1.5, min_pts}), 16);
            differ += got != oracle::dbscan(m, 1.5, min_pts);
            if (min_pts == 1) cc_differ += got != oracle::components8(m);
        }
    return {differ == 0 && cc_differ == 0, std::to_string(differ) + "/200 partitions differ from O(n^2) reference, " +
                                               std::to_string(cc_differ) + "/100 differ from flood fill"};
}

// ---- 3 -------------------------------------------------------------------
Outcome prompt_validity() {
    SynthConfig sc;
    sc.count = 256;
    sc.seed = 303;
    const auto scenes = gen_synthetic_dataset(sc);
    BenchmarkConfig bc;
    bc.master_seed = 303;
    bc.jobs = 1;
    testutil::TempDir a("acc_a"), b("acc_b");
    const auto m = build_benchmark(scenes, bc, a.path());
    build_benchmark(scenes, bc, b.path());

    std::size_t points = 0, off = 0, loose = 0, not_subset = 0, holes = 0, bad_count = 0, too_many = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& gt = scenes[i].mask;
        const auto& r = m.records[i];
        for (const auto* set : {&r.points_random, &r.points_center}) {
            too_many += set->size() > std::size_t(kMaxPoints);
            for (auto p : *set) {
                ++points;
                off += !(gt.in_bounds(p.x, p.y) && gt.at(p.x, p.y));
            }
        }
        const auto all = cluster_union(dbscan(gt, bc.dbscan));
        if (!all.empty()) {
            if (!r.box) {
                ++loose;
            } else {
                bool l = false, rt = false, t = false, bt = false, inside = true;
                for (auto p : all) {
                    inside &= p.x >= r.box->x_min && p.x <= r.box->x_max && p.y >= r.box->y_min && p.y <= r.box->y_max;
                    l |= p.x == r.box->x_min;
                    rt |= p.x == r.box->x_max;
                    t |= p.y == r.box->y_min;
                    bt |= p.y == r.box->y_max;
                }
                loose += !(inside && l && rt && t && bt);
            }
        }
        if (gt.count() > 0) {
            not_subset += !r.mask_unfilled->subset_of(*r.mask_filled);
            holes += oracle::enclosed_count(*r.mask_filled) != 0;
            bad_count += r.unfilled_sample_count != std::size_t(std::ceil(0.008 * double(gt.count())));
        }
    }
    std::size_t files = 0, differing = 0;
    for (const auto& e : std::filesystem::directory_iterator(a.path())) {
        ++files;
        differing += testutil::read_bytes(e.path()) != testutil::read_bytes(b / e.path().filename().string());
    }
    const bool pass = points > 0 && off == 0 && loose == 0 && not_subset == 0 && holes == 0 && bad_count == 0 &&
                      too_many == 0 && differing == 0;
    return {pass, std::to_string(points) + " points (" + std::to_string(off) + " off foreground), " +
                      std::to_string(loose) + " loose boxes, " + std::to_string(not_subset) + " unfilled not in filled, " +
                      std::to_string(holes) + " filled with holes, " + std::to_string(bad_count) +
                      " sample-size mismatches, " + std::to_string(differing) + "/" + std::to_string(files) +
                      " files differ on regeneration"};
}

// ---- 4 -------------------------------------------------------------------
Outcome token_arithmetic() {
    PromptCodecConfig cfg;
    cfg.channels = 8;
    PromptCodec codec(cfg);
    ParamStore ps;
    Rng rng(404);
    codec.init_params(ps, rng);
    int bad = 0, combos = 0;
    std::size_t all_prompts = 0;
    for (int pattern = 0; pattern < 8; ++pattern)
        for (int k = 0; k <= kMaxPoints; ++k) {
            PromptSet p;
            const bool has_points = pattern & 1, has_box = pattern & 2, has_mask = pattern & 4;
            if (has_points) {
                p.points = PointPrompt{};
                for (int i = 0; i < k; ++i) p.points->points.push_back({i, 2 * i % 16});
            }
            if (has_box) p.box = BoxPrompt{1, 1, 9, 12};
            if (has_mask) {
                BinaryMask m(16, 16);
                m.set(4, 4, true);
                p.mask = MaskPrompt{MaskKind::Filled, m};
            }
            const auto n = codec.encode(p, 16, 16, ps).sparse.dim(0);
            const std::size_t expect = 1 + ((has_points && k > 0) ? std::size_t(k) : 1) + (has_box ? 2 : 1);
            ++combos;
            bad += n != expect || n < 1 || n > 12;
            if (pattern == 7 && k == kMaxPoints) all_prompts = n;
        }
    return {bad == 0 && all_prompts == 12, std::to_string(combos) + " combinations, " + std::to_string(bad) +
                                               " outside layout/[1,12], all-prompts N=" + std::to_string(all_prompts)};
}

// ---- 5 -------------------------------------------------------------------
Outcome decoder_numerics() {
    const auto t0 = Clock::now();
    PromptCodecConfig pc;
    pc.channels = 8;
    pc.heads = 2;
    pc.mlp_hidden = 16;
    pc.reduction = 1;
    PromptCodec codec(pc);
    ParamStore ps;
    Rng rng(505);
    codec.init_params(ps, rng);
    for (const auto& n : ps.names())
        for (auto& v : ps.value(n).data) v += rng.uniform(-0.2, 0.2);
    double ref_err = 0;
    for (auto shape : {Shape{8, 2, 2}, Shape{8, 8, 8}}) {
        Tensor sparse({12, 8}), dense(shape);
        for (auto& v : sparse.data) v = rng.uniform(-1, 1);
        for (auto& v : dense.data) v = rng.uniform(-1, 1);
        for (int b = 0; b < kDecoderBlocks; ++b) {
            const auto [t, d] = codec.iptb_forward(b, Var::constant(sparse), Var::constant(dense), ps);
            const auto [rt, rd] = oracle::iptb(ps, b, sparse, dense, codec.frequencies(), pc.heads);
            ref_err = std::max({ref_err, max_abs_diff(t.value(), rt), max_abs_diff(d.value(), rd)});
        }
    }

    ModelConfig mc;
    mc.seed = 5;
    mc.backbone = {8, 8, 8, 8, 8, 8, 2};
    mc.prompt = pc;
    mc.prompt.reduction = 2;
    LakeModel model(mc);
    Image img(8, 8);
    for (auto& v : img.data) v = rng.uniform();
    BinaryMask gt(8, 8), pm(8, 8);
    for (int y = 2; y < 7; ++y)
        for (int x = 1; x < 5; ++x) gt.set(x, y, true), pm.set(x, y, (x + y) % 3 != 0);
    PromptSet p;
    p.points = PointPrompt{PointKind::Random, {{2, 3}, {3, 5}, {1, 6}}};
    p.box = BoxPrompt{1, 2, 4, 6};
    p.mask = MaskPrompt{MaskKind::Unfilled, pm};
    auto f = [&](ParamStore&) { return cross_entropy(model.forward_prompted(img, p), gt.data()); };
    const auto rep = grad_check(f, model.params());
    const double secs = seconds_since(t0);
    return {ref_err <= kIptbTolerance && rep.passed && rep.max_rel_error < kGradTolerance && secs < kDecoderSeconds,
            "reference max |diff| " + fmt("%.2e", ref_err) + ", grad check " + fmt("%.2e", rep.max_rel_error) +
                " over " + std::to_string(rep.checked) + " elements (worst " + rep.worst_param + "), " +
                fmt("%.1f s", secs)};
}

// ---- 6 -------------------------------------------------------------------
Outcome inference_independence() {
    ModelConfig mc;
    mc.seed = 6;
    LakeModel model(mc);
    SynthConfig sc;
    sc.count = 4;
    sc.seed = 606;
    const auto scenes = gen_synthetic_dataset(sc);
    std::vector<Tensor> before;
    for (const auto& s : scenes) before.push_back(model.forward_prompt_free(s.image).value());
    Rng rng(606);
    for (const auto& n : model.params().names())
        if (n.rfind("prompt.", 0) == 0)
            for (auto& v : model.params().value(n).data) v = rng.normal() * 10.0;
    double diff = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        diff = std::max(diff, max_abs_diff(model.forward_prompt_free(scenes[i].image).value(), before[i]));
    const auto& b = mc.backbone;
    auto conv = [](std::size_t o, std::size_t i) { return o * i * 9 + o; };
    const std::size_t closed = conv(b.stage1, 3) + conv(b.stage2, b.stage1) + conv(b.channels, b.stage2) +
                               conv(b.decoder2, b.channels + b.stage2) + conv(b.decoder1, b.decoder2 + b.stage1) +
                               conv(b.classes, b.decoder1);
    const auto counted = model.count_params(false);
    return {diff == 0.0 && counted == closed, "max logit change " + fmt("%g", diff) + ", backbone params " +
                                                  std::to_string(counted) + " vs closed form " + std::to_string(closed)};
}

// ---- 7 -------------------------------------------------------------------
Outcome schedule() {
    SynthConfig sc;
    sc.count = 16;
    sc.seed = 707;
    const auto scenes = gen_synthetic_dataset(sc);
    const auto manifest = build_benchmark(scenes, {});
    ModelConfig mc;
    mc.seed = 7;
    LakeModel model(mc);
    TrainConfig tc;
    tc.total_steps = 200;
    tc.prompt_steps = 50;
    tc.batch_size = 2;
    tc.seed = 7;
    int nonzero_after = 0, zero_before = 0;
    auto observer = [&](const StepRecord& r, const ParamStore& ps) {
        bool any = false;
        for (const auto& n : ps.names()) {
            if (n.rfind("prompt.", 0) != 0) continue;
            for (double g : ps.grad(n).data) any |= g != 0.0;
        }
        if (r.step >= 50) nonzero_after += any;
        else zero_before += !any;
    };
    const auto log = train_two_stage(model, scenes, &manifest, tc, observer).log;
    int wrong_mode = 0;
    for (const auto& r : log) wrong_mode += (r.mode == StepMode::Prompted) != (r.step < 50);
    return {log.size() == 200 && wrong_mode == 0 && nonzero_after == 0 && zero_before == 0,
            std::to_string(log.size()) + " steps, " + std::to_string(wrong_mode) + " wrong modes, " +
                std::to_string(nonzero_after) + " steps >= 50 with prompt gradient, " + std::to_string(zero_before) +
                " prompted steps without"};
}

// ---- 8 and 9 -------------------------------------------------------------
struct EndToEnd {
    std::vector<Scene> train, test;
    BenchmarkManifest manifest;
    std::vector<double> two_stage, prompt_free;
    double first_run_seconds = 0;
    bool ran = false;
};

EndToEnd& end_to_end_data() {
    static EndToEnd e = [] {
        EndToEnd d;
        SynthConfig sc;
        sc.count = 160;
        sc.size = 32;
        sc.seed = 7;
        auto all = gen_synthetic_dataset(sc);
        d.train.assign(all.begin(), all.begin() + 128);
        d.test.assign(all.begin() + 128, all.end());
        BenchmarkConfig bc;
        bc.master_seed = 7;
        d.manifest = build_benchmark(d.train, bc);
        return d;
    }();
    return e;
}

double run_once(EndToEnd& d, std::uint64_t seed, int prompt_steps) {
    ModelConfig mc;
    mc.seed = seed;
    LakeModel model(mc);
    TrainConfig tc;
    tc.total_steps = 2000;
    tc.prompt_steps = prompt_steps;
    tc.seed = seed;
    tc.combination = parse_prompt_combination("random_points:3");
    train_two_stage(model, d.train, &d.manifest, tc);
    return evaluate(model, d.test).miou;
}

constexpr std::uint64_t kSeeds[] = {0, 1, 2};

Outcome end_to_end() {
    auto& d = end_to_end_data();
    const auto t0 = Clock::now();
    const double miou = run_once(d, kSeeds[0], 500);
    d.first_run_seconds = seconds_since(t0);
    d.two_stage.push_back(miou);
    return {miou >= kEndToEndMiou && d.first_run_seconds < kEndToEndSeconds,
            "prompt-free test mIoU " + fmt("%.2f", miou) + " (threshold " + fmt("%.1f", kEndToEndMiou) + "), " +
                fmt("%.0f s", d.first_run_seconds)};
}

Outcome directional() {
    auto& d = end_to_end_data();
    for (std::size_t i = d.two_stage.size(); i < std::size(kSeeds); ++i) d.two_stage.push_back(run_once(d, kSeeds[i], 500));
    for (auto s : kSeeds) d.prompt_free.push_back(run_once(d, s, 0));
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    const double a = mean(d.two_stage), b = mean(d.prompt_free);
    std::string runs;
    for (std::size_t i = 0; i < d.two_stage.size(); ++i)
        runs += " seed " + std::to_string(kSeeds[i]) + ": " + fmt("%.2f", d.two_stage[i]) + "/" +
                fmt("%.2f", d.prompt_free[i]) + ";";
    return {a >= b - kDirectionalSlack, "two-stage mean mIoU " + fmt("%.2f", a) + ", T=0 mean " + fmt("%.2f", b) +
                                            " (two-stage/T=0 per seed:" + runs + ")"};
}

// ---- 10 ------------------------------------------------------------------
Outcome metrics_arithmetic() {
    // Build the 4×4 case pixel by pixel rather than from counts.
    BinaryMask pred(4, 4), gt(4, 4);
    int i = 0;
    auto put = [&](bool p, bool g, int n) {
        for (int k = 0; k < n; ++k, ++i) {
            pred.set(i % 4, i / 4, p);
            gt.set(i % 4, i / 4, g);
        }
    };
    put(true, true, 6);
    put(true, false, 2);
    put(false, true, 1);
    put(false, false, 7);
    const auto m = compute_metrics(pred, gt);
    const bool pass = std::abs(m.oa - 81.25) <= kMetricsTolerance && std::abs(m.f1 - 80.0) <= kMetricsTolerance &&
                      std::abs(m.miou - 68.33) <= kMetricsTolerance;
    return {pass, "OA " + fmt("%.4f", m.oa) + ", F1 " + fmt("%.4f", m.f1) + ", mIoU " + fmt("%.4f", m.miou)};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"morphology matches set-definition oracle", morphology_oracle},
        {"dbscan matches brute-force reference", dbscan_oracle},
        {"prompt validity sweep", prompt_validity},
        {"sparse token arithmetic", token_arithmetic},
        {"decoder reference and gradient check", decoder_numerics},
        {"prompt-free inference independence", inference_independence},
        {"two-stage schedule", schedule},
        {"desk-scale end-to-end", end_to_end},
        {"two-stage vs prompt-free over seeds", directional},
        {"metrics arithmetic", metrics_arithmetic},
    };
    std::set<int> only;
    for (int a = 1; a < argc; ++a) only.insert(std::stoi(argv[a]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = int(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}

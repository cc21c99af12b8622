// Command-line front end: synth, gen-prompts, train, eval, render.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "leprompter/backbone.hpp"
#include "leprompter/error.hpp"
#include "leprompter/promptgen.hpp"
#include "leprompter/raster_io.hpp"
#include "leprompter/trainer.hpp"

namespace fs = std::filesystem;
using namespace leprompter;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fills options that were not given on the command line from a JSON object
// whose keys are long option names without the leading dashes.
void apply_config(CLI::App& cmd, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError("config " + path + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "config") throw UsageError("config: key 'config' not allowed");
        CLI::Option* opt = cmd.get_option_no_throw("--" + key);
        if (!opt) throw UsageError("config: unknown key '" + key + "' for " + cmd.get_name());
        if (opt->count() > 0) continue;
        std::string text;
        if (value.is_string())
            text = value.get<std::string>();
        else if (value.is_boolean())
            text = value.get<bool>() ? "true" : "false";
        else
            text = value.dump();
        if (opt->get_expected_min() == 0) {
            if (text != "true" && text != "false") throw UsageError("config: '" + key + "' expects a boolean");
            if (text == "false") continue;
        }
        opt->add_result(text);
        opt->run_callback();
    }
}

ModelConfig model_from_flags(int channels, int heads, int mlp_hidden, int reduction, int size, std::uint64_t seed) {
    ModelConfig mc;
    mc.seed = seed;
    mc.backbone.channels = channels;
    mc.backbone.input_size = size;
    mc.prompt.channels = channels;
    mc.prompt.heads = heads;
    mc.prompt.mlp_hidden = mlp_hidden;
    mc.prompt.reduction = reduction;
    return mc;
}

PointKinds parse_kinds(const std::string& s) {
    if (s == "both") return PointKinds::Both;
    if (s == "random") return PointKinds::Random;
    if (s == "center") return PointKinds::Center;
    throw UsageError("--kind must be both, random or center");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lake prompt benchmark synthesis and prompt-enhanced training"};
    app.require_subcommand(1);
    std::string config_path;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic lake dataset");
    SynthConfig sc;
    std::string synth_out;
    synth->add_option("--count", sc.count, "number of scenes")->capture_default_str();
    synth->add_option("--size", sc.size, "image side in pixels")->capture_default_str();
    synth->add_option("--seed", sc.seed, "master seed")->capture_default_str();
    synth->add_option("--blob-min", sc.blob_min)->capture_default_str();
    synth->add_option("--blob-max", sc.blob_max)->capture_default_str();
    synth->add_option("--noise-std", sc.noise_std)->capture_default_str();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--config", config_path, "JSON file with defaults for these flags");

    // gen-prompts
    auto* gen = app.add_subcommand("gen-prompts", "build the five-type prompt benchmark");
    BenchmarkConfig bc;
    bc.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string gen_data, gen_out, kind = "both";
    gen->add_option("--data", gen_data, "dataset directory")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", bc.master_seed)->capture_default_str();
    gen->add_option("--eps", bc.dbscan.eps)->capture_default_str();
    gen->add_option("--min-pts", bc.dbscan.min_pts)->capture_default_str();
    gen->add_option("--points", bc.point_count, "points per prompt (1-9)")->capture_default_str();
    gen->add_option("--kind", kind, "both|random|center")->capture_default_str();
    gen->add_option("--shift", bc.center_shift, "center point jitter radius")->capture_default_str();
    gen->add_option("--ratio", bc.unfilled.sample_ratio, "unfilled mask sampling ratio")->capture_default_str();
    gen->add_option("--jobs", bc.jobs)->capture_default_str();
    gen->add_option("--config", config_path);

    // model flags shared by train/render
    int channels = 32, heads = 2, mlp_hidden = 64, reduction = 2;

    // train
    auto* train = app.add_subcommand("train", "two-stage training");
    TrainConfig tc;
    std::string train_data, manifest_path, ckpt_out, log_path, prompt_text = "random_points:3";
    bool no_flip = false;
    train->add_option("--data", train_data)->required();
    train->add_option("--manifest", manifest_path, "benchmark manifest.json (needed when --prompt-steps > 0)");
    train->add_option("--out", ckpt_out, "checkpoint path")->required();
    train->add_option("--log", log_path, "JSON-lines step log");
    train->add_option("--total-steps", tc.total_steps)->capture_default_str();
    train->add_option("--prompt-steps", tc.prompt_steps)->capture_default_str();
    train->add_option("--batch-size", tc.batch_size)->capture_default_str();
    train->add_option("--lr", tc.lr)->capture_default_str();
    train->add_option("--weight-decay", tc.weight_decay)->capture_default_str();
    train->add_option("--seed", tc.seed)->capture_default_str();
    train->add_option("--prompt", prompt_text, "prompt combination, e.g. random_points:3,box")->capture_default_str();
    train->add_option("--channels", channels)->capture_default_str();
    train->add_option("--heads", heads)->capture_default_str();
    train->add_option("--mlp-hidden", mlp_hidden)->capture_default_str();
    train->add_option("--reduction", reduction)->capture_default_str();
    train->add_flag("--no-flip", no_flip, "disable horizontal flips");
    train->add_option("--config", config_path);

    // eval
    auto* eval = app.add_subcommand("eval", "prompt-free evaluation, metrics JSON on stdout");
    std::string eval_data, eval_ckpt;
    eval->add_option("--data", eval_data)->required();
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--config", config_path);

    // render
    auto* render = app.add_subcommand("render", "write overlay PNGs");
    std::string render_data, render_out, render_manifest, render_ckpt, render_prompt = "random_points:3";
    bool with_prompts = false;
    render->add_option("--data", render_data)->required();
    render->add_option("--out", render_out)->required();
    render->add_option("--manifest", render_manifest);
    render->add_option("--checkpoint", render_ckpt, "draw the prompt-free prediction boundary");
    render->add_option("--prompt", render_prompt, "prompts drawn with --with-prompts")->capture_default_str();
    render->add_flag("--with-prompts", with_prompts, "draw prompts from the manifest");
    render->add_option("--config", config_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        CLI::App* cmd = app.get_subcommands().front();
        if (!config_path.empty()) apply_config(*cmd, config_path);

        if (cmd == synth) {
            sc.validate();
            fs::create_directories(synth_out);
            for (const auto& scene : gen_synthetic_dataset(sc)) save_scene(scene, synth_out);
            std::cerr << "wrote " << sc.count << " scenes to " << synth_out << "\n";
        } else if (cmd == gen) {
            bc.kinds = parse_kinds(kind);
            if (bc.jobs < 1) throw UsageError("--jobs must be >= 1");
            const auto scenes = load_dataset_dir(gen_data);
            const auto manifest = build_benchmark(scenes, bc, fs::path(gen_out));
            std::cerr << "wrote " << manifest.records.size() << " records to " << gen_out << "\n";
        } else if (cmd == train) {
            tc.combination = parse_prompt_combination(prompt_text);
            tc.horizontal_flip = !no_flip;
            tc.validate();
            const auto scenes = load_dataset_dir(train_data);
            if (scenes.empty()) throw IoError("no scenes in " + train_data);
            std::optional<BenchmarkManifest> manifest;
            if (!manifest_path.empty())
                manifest = load_manifest(manifest_path);
            else if (tc.prompt_steps > 0)
                throw ContractError("--manifest is required when --prompt-steps > 0");
            LakeModel model(
                model_from_flags(channels, heads, mlp_hidden, reduction, scenes.front().image.width, tc.seed));
            std::ofstream log;
            if (!log_path.empty()) {
                log.open(log_path);
                if (!log) throw IoError("cannot write " + log_path);
            }
            const int every = std::max(1, tc.total_steps / 20);
            auto observer = [&](const StepRecord& r, const ParamStore&) {
                if (log) log << step_record_json(r) << "\n";
                if (r.step % every == 0 || r.step + 1 == tc.total_steps)
                    std::cerr << "step " << r.step << " " << to_string(r.mode) << " loss " << r.loss << "\n";
            };
            train_two_stage(model, scenes, manifest ? &*manifest : nullptr, tc, observer);
            save_checkpoint(model, ckpt_out);
        } else if (cmd == eval) {
            const auto model = load_checkpoint(eval_ckpt);
            const auto scenes = load_dataset_dir(eval_data);
            std::cout << metrics_json(evaluate(model, scenes)) << "\n";
        } else if (cmd == render) {
            const auto scenes = load_dataset_dir(render_data);
            std::optional<BenchmarkManifest> manifest;
            if (!render_manifest.empty()) manifest = load_manifest(render_manifest);
            if (with_prompts && !manifest) throw UsageError("--with-prompts needs --manifest");
            const auto combination = parse_prompt_combination(render_prompt);
            std::optional<LakeModel> model;
            if (!render_ckpt.empty()) model.emplace(load_checkpoint(render_ckpt));
            fs::create_directories(render_out);
            for (const auto& scene : scenes) {
                std::optional<PromptSet> prompts;
                if (with_prompts) {
                    const auto* rec = manifest->find(scene.id);
                    if (!rec) throw ContractError("scene " + scene.id + " missing from manifest");
                    prompts = assemble_prompts(*rec, combination);
                }
                std::optional<BinaryMask> pred;
                if (model) pred = argmax_mask(model->forward_prompt_free(scene.image));
                const auto rgb = render_overlay(scene, prompts ? &*prompts : nullptr, pred ? &*pred : nullptr);
                save_rgb(rgb, fs::path(render_out) / (scene.id + ".overlay.png"));
            }
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}

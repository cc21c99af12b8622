#include "leprompter/trainer.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "leprompter/error.hpp"
#include "leprompter/rng.hpp"

namespace leprompter {

void TrainConfig::validate() const {
    if (total_steps < 0) throw ContractError("train: total_steps must be >= 0");
    if (prompt_steps < 0 || prompt_steps > total_steps) {
        throw ContractError("train: prompt_steps must lie in [0, total_steps]");
    }
    if (batch_size < 1) throw ContractError("train: batch_size must be >= 1");
    if (!(lr > 0.0) || weight_decay < 0.0) throw ContractError("train: lr must be > 0 and weight_decay >= 0");
    combination.validate();
}

bool step_uses_prompts(int step, const TrainConfig& config) { return step < config.prompt_steps; }

const char* to_string(StepMode mode) { return mode == StepMode::Prompted ? "prompted" : "prompt_free"; }

std::string step_record_json(const StepRecord& r) {
    nlohmann::json j{{"step", r.step}, {"mode", to_string(r.mode)}, {"loss", r.loss}, {"lr", r.lr}};
    return j.dump();
}

Image flip_horizontal(const Image& image) {
    Image out(image.width, image.height);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) out.at(c, x, y) = image.at(c, image.width - 1 - x, y);
    return out;
}

BinaryMask flip_horizontal(const BinaryMask& mask) {
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) out.set(x, y, mask.at(mask.width() - 1 - x, y));
    return out;
}

PromptSet flip_horizontal(const PromptSet& prompts, int width) {
    PromptSet out = prompts;
    if (out.points) {
        for (auto& p : out.points->points) p.x = width - 1 - p.x;
    }
    if (out.box) {
        const auto b = *out.box;
        out.box = BoxPrompt{width - 1 - b.x_max, b.y_min, width - 1 - b.x_min, b.y_max};
    }
    if (out.mask) out.mask->raster = flip_horizontal(out.mask->raster);
    return out;
}

TrainResult train_two_stage(LakeModel& model, const std::vector<Scene>& scenes, const BenchmarkManifest* manifest,
                            const TrainConfig& config, const StepObserver& observer) {
    config.validate();
    if (scenes.empty()) throw ContractError("train: no training scenes");
    if (config.prompt_steps > 0) {
        if (!manifest) throw ContractError("train: a benchmark manifest is required when prompt_steps > 0");
        for (const auto& s : scenes) {
            if (!manifest->find(s.id)) throw ContractError("train: no prompt record for scene " + s.id);
        }
    }

    AdamW optimizer({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    Rng flip_rng(derive_seed(config.seed, "flip"));
    std::vector<std::size_t> order(scenes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();

    TrainResult result;
    result.log.reserve(static_cast<std::size_t>(config.total_steps));
    auto& params = model.params();
    for (int step = 0; step < config.total_steps; ++step) {
        const bool prompted = step_uses_prompts(step, config);
        params.zero_grad();
        double loss_sum = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                shuffle_rng.shuffle(order);
                cursor = 0;
            }
            const Scene& scene = scenes[order[cursor++]];
            const bool flip = config.horizontal_flip && flip_rng.uniform() < 0.5;
            const Image image = flip ? flip_horizontal(scene.image) : scene.image;
            const BinaryMask gt = flip ? flip_horizontal(scene.mask) : scene.mask;

            Var logits;
            if (prompted) {
                const auto* record = manifest->find(scene.id);
                if (!record) throw ContractError("train: no prompt record for scene " + scene.id);
                PromptSet prompts = assemble_prompts(*record, config.combination);
                if (flip) prompts = flip_horizontal(prompts, image.width);
                logits = model.forward_prompted(image, prompts);
            } else {
                logits = model.forward_prompt_free(image);
            }
            const Var loss = cross_entropy(logits, gt.data());
            loss_sum += loss.value()[0];
            backward(scale(loss, 1.0 / config.batch_size));
        }
        StepRecord rec{step, prompted ? StepMode::Prompted : StepMode::PromptFree, loss_sum / config.batch_size,
                       config.lr};
        if (observer) observer(rec, params);
        optimizer.step(params);
        result.log.push_back(rec);
    }
    params.zero_grad();
    return result;
}

Confusion confusion_counts(const BinaryMask& pred, const BinaryMask& gt) {
    if (!pred.same_extent(gt)) {
        throw ContractError("metrics: prediction " + std::to_string(pred.width()) + "x" + std::to_string(pred.height()) +
                            " vs ground truth " + std::to_string(gt.width()) + "x" + std::to_string(gt.height()));
    }
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.data()[i], g = gt.data()[i];
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

Metrics metrics_from_confusion(const Confusion& c) {
    auto ratio = [](double num, double den) { return den == 0.0 ? 1.0 : num / den; };
    Metrics m;
    m.confusion = c;
    const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const auto fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
    m.oa = 100.0 * ratio(tp + tn, tp + fp + fn + tn);
    m.f1 = 100.0 * ratio(2.0 * tp, 2.0 * tp + fp + fn);
    const double iou_fg = ratio(tp, tp + fp + fn);
    const double iou_bg = ratio(tn, tn + fp + fn);
    m.miou = 100.0 * (iou_fg + iou_bg) / 2.0;
    return m;
}

Metrics compute_metrics(const BinaryMask& pred, const BinaryMask& gt) {
    return metrics_from_confusion(confusion_counts(pred, gt));
}

std::string metrics_json(const Metrics& m) {
    nlohmann::json j{{"oa", m.oa},
                     {"f1", m.f1},
                     {"miou", m.miou},
                     {"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}}}};
    return j.dump(2);
}

Metrics evaluate(const LakeModel& model, const std::vector<Scene>& scenes) {
    Confusion total;
    for (const auto& s : scenes) total += confusion_counts(argmax_mask(model.forward_prompt_free(s.image)), s.mask);
    return metrics_from_confusion(total);
}

} // namespace leprompter

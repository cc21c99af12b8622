#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "leprompter/backbone.hpp"
#include "leprompter/promptgen.hpp"

namespace leprompter {

struct TrainConfig {
    int total_steps = 2000;
    /// Steps [0, prompt_steps) are prompted; the rest prompt-free.
    int prompt_steps = 500;
    int batch_size = 16;
    double lr = 6e-5;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    PromptCombination combination;
    bool horizontal_flip = true;

    void validate() const;
};

bool step_uses_prompts(int step, const TrainConfig& config);

enum class StepMode { Prompted, PromptFree };
const char* to_string(StepMode mode);

struct StepRecord {
    int step = 0;
    StepMode mode = StepMode::PromptFree;
    double loss = 0.0;
    double lr = 0.0;
};

std::string step_record_json(const StepRecord& record);

/// Called after a step's gradients are accumulated and before the optimizer
/// update.
using StepObserver = std::function<void(const StepRecord&, const ParamStore&)>;

struct TrainResult {
    std::vector<StepRecord> log;
};

/// Two-stage schedule: prompted supervision through the prompt codec for
/// the first `prompt_steps`, prompt-free afterwards. Cross-entropy on the
/// final logits, AdamW, seeded shuffling and horizontal flips.
TrainResult train_two_stage(LakeModel& model, const std::vector<Scene>& scenes, const BenchmarkManifest* manifest,
                            const TrainConfig& config, const StepObserver& observer = {});

struct Confusion {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    Confusion& operator+=(const Confusion& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    std::uint64_t total() const { return tp + fp + fn + tn; }
};

/// Percentages. mIoU averages foreground and background IoU; a class absent
/// from both prediction and ground truth counts as IoU 1.
struct Metrics {
    double oa = 0.0;
    double f1 = 0.0;
    double miou = 0.0;
    Confusion confusion;
};

Confusion confusion_counts(const BinaryMask& pred, const BinaryMask& gt);
Metrics metrics_from_confusion(const Confusion& confusion);
Metrics compute_metrics(const BinaryMask& pred, const BinaryMask& gt);
std::string metrics_json(const Metrics& metrics);

/// Prompt-free inference over every scene; metrics from the global confusion.
Metrics evaluate(const LakeModel& model, const std::vector<Scene>& scenes);

/// Mirrors an image, mask, or prompt set left-right.
Image flip_horizontal(const Image& image);
BinaryMask flip_horizontal(const BinaryMask& mask);
PromptSet flip_horizontal(const PromptSet& prompts, int width);

} // namespace leprompter

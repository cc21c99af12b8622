#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "leprompter/params.hpp"
#include "leprompter/prompt_codec.hpp"
#include "leprompter/raster_io.hpp"

namespace leprompter {

struct BackboneConfig {
    int channels = 32;   // C, width of F
    int stage1 = 16;     // skip at H/2
    int stage2 = 32;     // skip at H/4
    int decoder2 = 32;   // decoder width at H/4
    int decoder1 = 16;   // decoder width at H/2
    int input_size = 32;
    int classes = 2;

    void validate() const;
};

struct ModelConfig {
    BackboneConfig backbone;
    PromptCodecConfig prompt;
    std::uint64_t seed = 0;
};

struct EncoderOutput {
    Var skip_half;      // [stage1, H/2, W/2]
    Var skip_quarter;   // [stage2, H/4, W/4]
    Var embedding;      // F: [C, H/4, W/4], last stage upsampled ×2
};

/// Image [0,1]³ as a [3,H,W] constant, centered at 0.
Var image_input(const Image& image);

/// Toy three-stage conv encoder/decoder standing in for the host
/// segmentation network, plus the prompt codec used during the prompted
/// training stage.
class LakeModel {
  public:
    explicit LakeModel(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const PromptCodec& codec() const { return codec_; }

    EncoderOutput vie_forward(const Image& image) const;
    /// Logits [classes, H, W].
    Var vid_forward(const Var& embedding, const EncoderOutput& skips) const;
    /// The prompt path is absent: the decoder consumes F directly.
    Var forward_prompt_free(const Image& image) const;
    Var forward_prompted(const Image& image, const PromptSet& prompts) const;

    std::size_t count_params(bool include_prompt) const;
    /// Closed-form backbone-only scalar count.
    std::size_t expected_backbone_params() const;

  private:
    void check_image(const Image& image) const;

    ModelConfig config_;
    PromptCodec codec_;
    ParamStore params_;
};

/// Per-pixel argmax of logits [2,H,W].
BinaryMask argmax_mask(const Var& logits);

/// JSON checkpoint: versioned header, model config, and name → shape +
/// row-major values in parameter order.
void save_checkpoint(const LakeModel& model, const std::filesystem::path& path);
LakeModel load_checkpoint(const std::filesystem::path& path);

} // namespace leprompter

#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "leprompter/params.hpp"
#include "leprompter/prompts.hpp"

namespace leprompter {

class Rng;

struct PromptCodecConfig {
    int channels = 32;
    int heads = 2;
    int mlp_hidden = 64;
    /// Spatial ratio of the image-side key/value reduction; 1 disables it.
    int reduction = 2;
    /// Width of the intermediate mask-downscaling stage.
    int mask_hidden = 8;
    std::uint64_t pe_seed = 0x5EED;

    void validate() const;
};

inline constexpr int kDecoderBlocks = 2;
inline constexpr int kMaxSparseTokens = 1 + kMaxPoints + 2;

struct EncodedPrompts {
    Var sparse; // [N, C], 1 <= N <= 12
    Var dense;  // [C, H/4, W/4]
};

/// Depth-wise k×k convolution followed by 1×1 point-wise mixing. Stride 2
/// requires even spatial extents.
Var depthwise_separable_conv(const Var& x, const Var& dw_weight, const Var& dw_bias, const Var& pw_weight,
                             const Var& pw_bias, int stride);

/// Multi-head scaled dot-product attention with input and output
/// projections stored under `prefix` (`q`, `k`, `v`, `out`, each with
/// `.weight` [C,C] applied as x·W and `.bias` [C]).
Var attention(const ParamStore& params, const std::string& prefix, const Var& queries, const Var& keys,
              const Var& values, int heads);

/// Prompt encoder and two-block image-prompt decoder. Parameters live in a
/// ParamStore under the "prompt." prefix; the Fourier frequency matrix is a
/// fixed buffer derived from `pe_seed`.
class PromptCodec {
  public:
    explicit PromptCodec(PromptCodecConfig config);

    const PromptCodecConfig& config() const { return config_; }
    const Tensor& frequencies() const { return frequencies_; }

    void init_params(ParamStore& params, Rng& rng) const;

    /// Sparse tokens are [query, points or no_point, box corners or no_box].
    EncodedPrompts encode(const PromptSet& prompts, int height, int width, const ParamStore& params) const;
    /// Conv3×3(F + O_d), channel preserving.
    Var fuse_dense(const Var& image_embedding, const Var& dense, const ParamStore& params) const;
    /// One block: token self-attention, token→image cross-attention,
    /// token MLP, image→token cross-attention; each a pre-norm residual.
    std::pair<Var, Var> iptb_forward(int block, const Var& sparse, const Var& dense,
                                     const ParamStore& params) const;
    /// fuse_dense, then both blocks; returns the final dense map.
    Var decode(const Var& image_embedding, const Var& sparse, const Var& dense, const ParamStore& params) const;

    /// Closed-form scalar count of every learnable prompt parameter.
    std::size_t expected_param_count() const;

    static std::string block_prefix(int block);

  private:
    PromptCodecConfig config_;
    Tensor frequencies_;
};

std::size_t count_prompt_params(const ParamStore& params);

} // namespace leprompter

#include "leprompter/prompt_codec.hpp"

#include <cmath>

#include "init.hpp"
#include "leprompter/error.hpp"

namespace leprompter {

namespace {

const std::string kEnc = "prompt.encoder.";
const std::string kDec = "prompt.decoder.";

Var linear(const ParamStore& params, const std::string& prefix, const Var& x) {
    return add_row_bias(matmul(x, params.get(prefix + ".weight")), params.get(prefix + ".bias"));
}

/// [C,h,w] -> [h·w, C]
Var to_tokens(const Var& map) {
    const auto c = map.dim(0), hw = map.dim(1) * map.dim(2);
    return transpose(reshape(map, {c, hw}));
}

/// [h·w, C] -> [C,h,w]
Var to_map(const Var& tokens, std::size_t h, std::size_t w) {
    return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

Var layer_norm_p(const ParamStore& params, const std::string& prefix, const Var& x) {
    return layer_norm(x, params.get(prefix + ".gain"), params.get(prefix + ".bias"));
}

template <class F>
auto named_step(const char* step, F&& f) {
    try {
        return f();
    } catch (const NumericError& e) {
        throw NumericError(std::string(step) + ": " + e.what());
    }
}

} // namespace

void PromptCodecConfig::validate() const {
    if (channels < 2 || channels % 2 != 0) throw ContractError("prompt codec: channels must be even and >= 2");
    if (heads < 1 || channels % heads != 0) throw ContractError("prompt codec: heads must divide channels");
    if (mlp_hidden < 1 || mask_hidden < 1) throw ContractError("prompt codec: hidden widths must be >= 1");
    if (reduction < 1) throw ContractError("prompt codec: reduction ratio must be >= 1");
}

Var depthwise_separable_conv(const Var& x, const Var& dw_weight, const Var& dw_bias, const Var& pw_weight,
                             const Var& pw_bias, int stride) {
    if (x.value().rank() != 3) throw ShapeError("depthwise_separable_conv: expected [C,H,W], got " + shape_string(x.shape()));
    if (stride == 2 && (x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0)) {
        throw ShapeError("depthwise_separable_conv: stride 2 needs even extents, got " + shape_string(x.shape()));
    }
    const int k = static_cast<int>(dw_weight.dim(2));
    const auto depthwise = conv2d(x, dw_weight, &dw_bias, stride, (k - 1) / 2, static_cast<int>(x.dim(0)));
    return conv2d(depthwise, pw_weight, &pw_bias, 1, 0, 1);
}

Var attention(const ParamStore& params, const std::string& prefix, const Var& queries, const Var& keys,
              const Var& values, int heads) {
    const Var q = linear(params, prefix + ".q", queries);
    const Var k = linear(params, prefix + ".k", keys);
    const Var v = linear(params, prefix + ".v", values);
    const auto c = q.dim(1);
    const auto d = c / static_cast<std::size_t>(heads);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<Var> outs;
    for (int h = 0; h < heads; ++h) {
        const auto b = static_cast<std::size_t>(h) * d;
        const Var qh = slice(q, 1, b, b + d);
        const Var kh = slice(k, 1, b, b + d);
        const Var vh = slice(v, 1, b, b + d);
        const Var weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_d));
        outs.push_back(matmul(weights, vh));
    }
    const Var merged = heads == 1 ? outs[0] : concat(outs, 1);
    return linear(params, prefix + ".out", merged);
}

PromptCodec::PromptCodec(PromptCodecConfig config) : config_(config) {
    config_.validate();
    frequencies_ = fourier_frequencies(static_cast<std::size_t>(config_.channels), config_.pe_seed);
}

std::string PromptCodec::block_prefix(int block) { return kDec + "block" + std::to_string(block) + "."; }

void PromptCodec::init_params(ParamStore& params, Rng& rng) const {
    using detail::he_bound;
    using detail::linear_bound;
    using detail::normal_tensor;
    using detail::uniform_tensor;
    const auto c = static_cast<std::size_t>(config_.channels);
    const auto mh = static_cast<std::size_t>(config_.mask_hidden);
    const auto hidden = static_cast<std::size_t>(config_.mlp_hidden);

    for (const char* name : {"query", "point", "box_top_left", "box_bottom_right", "no_point", "no_box", "no_mask"}) {
        params.add(kEnc + name, normal_tensor({1, c}, 1.0, rng));
    }
    params.add(kEnc + "mask_down1.dw.weight", uniform_tensor({1, 1, 3, 3}, he_bound(9), rng));
    params.add(kEnc + "mask_down1.dw.bias", Tensor::zeros({1}));
    params.add(kEnc + "mask_down1.pw.weight", uniform_tensor({mh, 1, 1, 1}, he_bound(1), rng));
    params.add(kEnc + "mask_down1.pw.bias", Tensor::zeros({mh}));
    params.add(kEnc + "mask_down2.dw.weight", uniform_tensor({mh, 1, 3, 3}, he_bound(9), rng));
    params.add(kEnc + "mask_down2.dw.bias", Tensor::zeros({mh}));
    params.add(kEnc + "mask_down2.pw.weight", uniform_tensor({c, mh, 1, 1}, he_bound(mh), rng));
    params.add(kEnc + "mask_down2.pw.bias", Tensor::zeros({c}));

    // Fusion conv starts as the identity map so Conv(F + O_d) = F + O_d.
    Tensor fuse({c, c, 3, 3});
    for (std::size_t i = 0; i < c; ++i) fuse.data[((i * c + i) * 3 + 1) * 3 + 1] = 1.0;
    params.add(kDec + "fuse.weight", std::move(fuse));
    params.add(kDec + "fuse.bias", Tensor::zeros({c}));

    const auto r = static_cast<std::size_t>(config_.reduction);
    for (int b = 0; b < kDecoderBlocks; ++b) {
        const auto p = block_prefix(b);
        for (const char* attn : {"self_attn", "cross_t2i", "cross_i2t"}) {
            for (const char* proj : {"q", "k", "v", "out"}) {
                const auto base = p + attn + "." + proj;
                params.add(base + ".weight", uniform_tensor({c, c}, linear_bound(c), rng));
                params.add(base + ".bias", Tensor::zeros({c}));
            }
        }
        params.add(p + "mlp.fc1.weight", uniform_tensor({c, hidden}, linear_bound(c), rng));
        params.add(p + "mlp.fc1.bias", Tensor::zeros({hidden}));
        params.add(p + "mlp.fc2.weight", uniform_tensor({hidden, c}, linear_bound(hidden), rng));
        params.add(p + "mlp.fc2.bias", Tensor::zeros({c}));
        for (const char* norm : {"norm1", "norm2", "norm3", "norm4", "kv_norm"}) {
            params.add(p + norm + ".gain", Tensor({c}, 1.0));
            params.add(p + norm + ".bias", Tensor::zeros({c}));
        }
        if (r > 1) {
            params.add(p + "sr.weight", uniform_tensor({c, c, r, r}, linear_bound(c * r * r), rng));
            params.add(p + "sr.bias", Tensor::zeros({c}));
        }
    }
}

std::size_t PromptCodec::expected_param_count() const {
    const auto c = static_cast<std::size_t>(config_.channels);
    const auto mh = static_cast<std::size_t>(config_.mask_hidden);
    const auto hidden = static_cast<std::size_t>(config_.mlp_hidden);
    const auto r = static_cast<std::size_t>(config_.reduction);
    const std::size_t embeddings = 7 * c;
    const std::size_t mask_path = (9 + 1) + (mh + mh) + (9 * mh + mh) + (c * mh + c);
    const std::size_t fuse = 9 * c * c + c;
    std::size_t block = 3 * 4 * (c * c + c) + (c * hidden + hidden) + (hidden * c + c) + 5 * 2 * c;
    if (r > 1) block += c * c * r * r + c;
    return embeddings + mask_path + fuse + kDecoderBlocks * block;
}

EncodedPrompts PromptCodec::encode(const PromptSet& prompts, int height, int width, const ParamStore& params) const {
    validate_prompts(prompts, width, height);
    if (height % 4 != 0 || width % 4 != 0) {
        throw ContractError("prompt encoder: image extents must be multiples of 4, got " + std::to_string(width) +
                            "x" + std::to_string(height));
    }
    auto normalized = [&](const Pixel& p) {
        return std::pair<double, double>{(p.x + 0.5) / width, (p.y + 0.5) / height};
    };

    std::vector<Var> rows{params.get(kEnc + "query")};
    if (prompts.has_points()) {
        std::vector<std::pair<double, double>> coords;
        for (const auto& p : prompts.points->points) coords.push_back(normalized(p));
        const Var pe = Var::constant(fourier_features(coords, frequencies_));
        rows.push_back(add(pe, repeat_rows(params.get(kEnc + "point"), coords.size())));
    } else {
        rows.push_back(params.get(kEnc + "no_point"));
    }
    if (prompts.box) {
        const auto& b = *prompts.box;
        const Var tl = Var::constant(fourier_features({normalized({b.x_min, b.y_min})}, frequencies_));
        const Var br = Var::constant(fourier_features({normalized({b.x_max, b.y_max})}, frequencies_));
        rows.push_back(add(tl, params.get(kEnc + "box_top_left")));
        rows.push_back(add(br, params.get(kEnc + "box_bottom_right")));
    } else {
        rows.push_back(params.get(kEnc + "no_box"));
    }

    const auto h4 = static_cast<std::size_t>(height / 4);
    const auto w4 = static_cast<std::size_t>(width / 4);
    Var dense;
    if (prompts.mask) {
        const auto& m = prompts.mask->raster;
        Tensor raster({1, static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
        for (std::size_t i = 0; i < raster.size(); ++i) raster[i] = m.data()[i];
        auto stage = [&](const Var& x, const std::string& name) {
            return gelu(depthwise_separable_conv(x, params.get(kEnc + name + ".dw.weight"),
                                                 params.get(kEnc + name + ".dw.bias"),
                                                 params.get(kEnc + name + ".pw.weight"),
                                                 params.get(kEnc + name + ".pw.bias"), 2));
        };
        dense = stage(stage(Var::constant(std::move(raster)), "mask_down1"), "mask_down2");
    } else {
        dense = to_map(repeat_rows(params.get(kEnc + "no_mask"), h4 * w4), h4, w4);
    }
    return {concat(rows, 0), dense};
}

Var PromptCodec::fuse_dense(const Var& image_embedding, const Var& dense, const ParamStore& params) const {
    if (image_embedding.shape() != dense.shape()) {
        throw ShapeError("fuse_dense: image embedding " + shape_string(image_embedding.shape()) +
                         " and dense token " + shape_string(dense.shape()) + " differ");
    }
    const Var bias = params.get(kDec + "fuse.bias");
    return conv2d(add(image_embedding, dense), params.get(kDec + "fuse.weight"), &bias, 1, 1);
}

std::pair<Var, Var> PromptCodec::iptb_forward(int block, const Var& sparse, const Var& dense,
                                              const ParamStore& params) const {
    const auto p = block_prefix(block);
    const auto c = static_cast<std::size_t>(config_.channels);
    if (sparse.value().rank() != 2 || sparse.dim(1) != c || dense.value().rank() != 3 || dense.dim(0) != c) {
        throw ShapeError("iptb: token " + shape_string(sparse.shape()) + " / map " + shape_string(dense.shape()) +
                         " inconsistent with C=" + std::to_string(c));
    }
    const auto h = dense.dim(1), w = dense.dim(2);
    const int heads = config_.heads;
    Var tokens = sparse;
    Var image = to_tokens(dense);

    tokens = named_step("self-attention", [&] {
        const Var a = layer_norm_p(params, p + "norm1", tokens);
        return add(tokens, attention(params, p + "self_attn", a, a, a, heads));
    });

    tokens = named_step("token-to-image attention", [&] {
        const auto r = static_cast<std::size_t>(config_.reduction);
        Var kv;
        Tensor kv_pe;
        if (r > 1) {
            if (h % r != 0 || w % r != 0) {
                throw ShapeError("iptb: map " + shape_string(dense.shape()) + " not divisible by reduction " +
                                 std::to_string(r));
            }
            const Var sr_bias = params.get(p + "sr.bias");
            const Var reduced = conv2d(dense, params.get(p + "sr.weight"), &sr_bias, static_cast<int>(r), 0);
            kv = to_tokens(reduced);
            kv_pe = grid_fourier_features(h / r, w / r, frequencies_);
        } else {
            kv = image;
            kv_pe = grid_fourier_features(h, w, frequencies_);
        }
        kv = layer_norm_p(params, p + "kv_norm", kv);
        const Var q = layer_norm_p(params, p + "norm2", tokens);
        const Var k = add(kv, Var::constant(std::move(kv_pe)));
        return add(tokens, attention(params, p + "cross_t2i", q, k, kv, heads));
    });

    tokens = named_step("token MLP", [&] {
        const Var a = layer_norm_p(params, p + "norm3", tokens);
        const Var hidden = gelu(linear(params, p + "mlp.fc1", a));
        return add(tokens, linear(params, p + "mlp.fc2", hidden));
    });

    image = named_step("image-to-token attention", [&] {
        const Var a = layer_norm_p(params, p + "norm4", image);
        const Var q = add(a, Var::constant(grid_fourier_features(h, w, frequencies_)));
        return add(image, attention(params, p + "cross_i2t", q, tokens, tokens, heads));
    });

    return {tokens, to_map(image, h, w)};
}

Var PromptCodec::decode(const Var& image_embedding, const Var& sparse, const Var& dense,
                        const ParamStore& params) const {
    Var d = fuse_dense(image_embedding, dense, params);
    Var t = sparse;
    for (int b = 0; b < kDecoderBlocks; ++b) std::tie(t, d) = iptb_forward(b, t, d, params);
    return d;
}

std::size_t count_prompt_params(const ParamStore& params) { return params.scalar_count("prompt."); }

} // namespace leprompter

#include "leprompter/backbone.hpp"

#include <fstream>

#include <json.hpp>

#include "init.hpp"
#include "leprompter/error.hpp"

namespace leprompter {

namespace {

const std::string kBb = "backbone.";

void add_conv(ParamStore& params, const std::string& name, std::size_t cout, std::size_t cin, double bound,
              Rng& rng) {
    params.add(name + ".weight", detail::uniform_tensor({cout, cin, 3, 3}, bound, rng));
    params.add(name + ".bias", Tensor::zeros({cout}));
}

Var conv3(const ParamStore& params, const std::string& name, const Var& x, int stride) {
    const Var b = params.get(name + ".bias");
    return conv2d(x, params.get(name + ".weight"), &b, stride, 1);
}

} // namespace

void BackboneConfig::validate() const {
    if (channels < 1 || stage1 < 1 || stage2 < 1 || decoder1 < 1 || decoder2 < 1 || classes < 2) {
        throw ContractError("backbone: channel widths must be positive and classes >= 2");
    }
    if (input_size < 8 || input_size % 8 != 0) {
        throw ContractError("backbone: input size must be a positive multiple of 8, got " + std::to_string(input_size));
    }
}

Var image_input(const Image& image) {
    Tensor t({3, static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width)});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = image.data[i] - 0.5;
    return Var::constant(std::move(t));
}

LakeModel::LakeModel(ModelConfig config) : config_(config), codec_(config.prompt) {
    config_.backbone.validate();
    if (config_.backbone.channels != config_.prompt.channels) {
        throw ContractError("model: backbone C and prompt codec C must match");
    }
    Rng rng(config_.seed);
    const auto& b = config_.backbone;
    const auto c = static_cast<std::size_t>(b.channels);
    const auto s1 = static_cast<std::size_t>(b.stage1), s2 = static_cast<std::size_t>(b.stage2);
    const auto d1 = static_cast<std::size_t>(b.decoder1), d2 = static_cast<std::size_t>(b.decoder2);
    add_conv(params_, kBb + "vie.stage1", s1, 3, detail::he_bound(3 * 9), rng);
    add_conv(params_, kBb + "vie.stage2", s2, s1, detail::he_bound(s1 * 9), rng);
    add_conv(params_, kBb + "vie.stage3", c, s2, detail::he_bound(s2 * 9), rng);
    add_conv(params_, kBb + "vid.stage2", d2, c + s2, detail::he_bound((c + s2) * 9), rng);
    add_conv(params_, kBb + "vid.stage1", d1, d2 + s1, detail::he_bound((d2 + s1) * 9), rng);
    // Small classifier init keeps the initial logits near zero.
    add_conv(params_, kBb + "vid.classifier", static_cast<std::size_t>(b.classes), d1, 1e-2, rng);
    Rng prompt_rng(derive_seed(config_.seed, "prompt"));
    codec_.init_params(params_, prompt_rng);
}

void LakeModel::check_image(const Image& image) const {
    const int n = config_.backbone.input_size;
    if (image.width != n || image.height != n) {
        throw ContractError("model expects " + std::to_string(n) + "x" + std::to_string(n) + " images, got " +
                            std::to_string(image.width) + "x" + std::to_string(image.height));
    }
}

EncoderOutput LakeModel::vie_forward(const Image& image) const {
    check_image(image);
    const Var x = image_input(image);
    const Var s1 = gelu(conv3(params_, kBb + "vie.stage1", x, 2));
    const Var s2 = gelu(conv3(params_, kBb + "vie.stage2", s1, 2));
    const Var s3 = gelu(conv3(params_, kBb + "vie.stage3", s2, 2));
    return {s1, s2, upsample_bilinear(s3, 2)};
}

Var LakeModel::vid_forward(const Var& embedding, const EncoderOutput& skips) const {
    if (embedding.shape() != skips.embedding.shape()) {
        throw ShapeError("vid_forward: embedding " + shape_string(embedding.shape()) + " does not match F " +
                         shape_string(skips.embedding.shape()));
    }
    Var x = gelu(conv3(params_, kBb + "vid.stage2", concat({embedding, skips.skip_quarter}, 0), 1));
    x = upsample_bilinear(x, 2);
    x = gelu(conv3(params_, kBb + "vid.stage1", concat({x, skips.skip_half}, 0), 1));
    x = upsample_bilinear(x, 2);
    return conv3(params_, kBb + "vid.classifier", x, 1);
}

Var LakeModel::forward_prompt_free(const Image& image) const {
    const auto enc = vie_forward(image);
    return vid_forward(enc.embedding, enc);
}

Var LakeModel::forward_prompted(const Image& image, const PromptSet& prompts) const {
    const auto enc = vie_forward(image);
    const auto encoded = codec_.encode(prompts, image.height, image.width, params_);
    const Var output_token = codec_.decode(enc.embedding, encoded.sparse, encoded.dense, params_);
    return vid_forward(output_token, enc);
}

std::size_t LakeModel::count_params(bool include_prompt) const {
    const auto backbone = params_.scalar_count(kBb);
    return include_prompt ? backbone + count_prompt_params(params_) : backbone;
}

std::size_t LakeModel::expected_backbone_params() const {
    const auto& b = config_.backbone;
    auto conv = [](std::size_t cout, std::size_t cin) { return cout * cin * 9 + cout; };
    const auto c = static_cast<std::size_t>(b.channels);
    const auto s1 = static_cast<std::size_t>(b.stage1), s2 = static_cast<std::size_t>(b.stage2);
    const auto d1 = static_cast<std::size_t>(b.decoder1), d2 = static_cast<std::size_t>(b.decoder2);
    return conv(s1, 3) + conv(s2, s1) + conv(c, s2) + conv(d2, c + s2) + conv(d1, d2 + s1) +
           conv(static_cast<std::size_t>(b.classes), d1);
}

BinaryMask argmax_mask(const Var& logits) {
    const auto& v = logits.value();
    if (v.rank() != 3 || v.dim(0) != 2) throw ShapeError("argmax_mask: expected [2,H,W], got " + shape_string(v.shape));
    const auto h = v.dim(1), w = v.dim(2);
    BinaryMask m(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            m.set(static_cast<int>(x), static_cast<int>(y), v.at(1, y, x) > v.at(0, y, x));
    return m;
}

using json = nlohmann::json;

void save_checkpoint(const LakeModel& model, const std::filesystem::path& path) {
    const auto& cfg = model.config();
    json root;
    root["format"] = "leprompter-checkpoint";
    root["version"] = 1;
    root["config"] = {
        {"seed", cfg.seed},
        {"backbone",
         {{"channels", cfg.backbone.channels},
          {"stage1", cfg.backbone.stage1},
          {"stage2", cfg.backbone.stage2},
          {"decoder2", cfg.backbone.decoder2},
          {"decoder1", cfg.backbone.decoder1},
          {"input_size", cfg.backbone.input_size},
          {"classes", cfg.backbone.classes}}},
        {"prompt",
         {{"channels", cfg.prompt.channels},
          {"heads", cfg.prompt.heads},
          {"mlp_hidden", cfg.prompt.mlp_hidden},
          {"reduction", cfg.prompt.reduction},
          {"mask_hidden", cfg.prompt.mask_hidden},
          {"pe_seed", cfg.prompt.pe_seed}}}};
    json params = json::array();
    for (const auto& name : model.params().names()) {
        const auto& t = model.params().value(name);
        params.push_back({{"name", name}, {"shape", t.shape}, {"data", t.data}});
    }
    root["params"] = std::move(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << root.dump() << "\n";
    if (!out) throw IoError("cannot write checkpoint " + path.string());
}

LakeModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    try {
        const json root = json::parse(in);
        if (root.value("format", "") != "leprompter-checkpoint" || root.value("version", 0) != 1) {
            throw FormatError(path.string() + ": not a version-1 checkpoint");
        }
        const auto& c = root.at("config");
        ModelConfig cfg;
        cfg.seed = c.at("seed").get<std::uint64_t>();
        const auto& b = c.at("backbone");
        cfg.backbone = {b.at("channels").get<int>(), b.at("stage1").get<int>(),   b.at("stage2").get<int>(),
                        b.at("decoder2").get<int>(), b.at("decoder1").get<int>(), b.at("input_size").get<int>(),
                        b.at("classes").get<int>()};
        const auto& p = c.at("prompt");
        cfg.prompt = {p.at("channels").get<int>(),    p.at("heads").get<int>(),
                      p.at("mlp_hidden").get<int>(),  p.at("reduction").get<int>(),
                      p.at("mask_hidden").get<int>(), p.at("pe_seed").get<std::uint64_t>()};
        LakeModel model(cfg);
        const auto& entries = root.at("params");
        if (entries.size() != model.params().names().size()) {
            throw FormatError(path.string() + ": parameter count mismatch");
        }
        for (const auto& e : entries) {
            const auto name = e.at("name").get<std::string>();
            if (!model.params().contains(name)) throw FormatError(path.string() + ": unknown parameter " + name);
            Tensor& t = model.params().value(name);
            const auto shape = e.at("shape").get<Shape>();
            auto data = e.at("data").get<std::vector<double>>();
            if (shape != t.shape || data.size() != t.size()) {
                throw FormatError(path.string() + ": parameter " + name + " has shape " + shape_string(shape) +
                                  ", expected " + shape_string(t.shape));
            }
            t.data = std::move(data);
        }
        return model;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const ContractError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace leprompter

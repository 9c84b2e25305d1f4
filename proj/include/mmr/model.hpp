#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmr/error.hpp"
#include "mmr/rng.hpp"
#include "mmr/tensor.hpp"
#include "mmr/tokenizer.hpp"

namespace mmr {

enum class ModelMode { mmr, mtr };

inline std::string_view to_string(ModelMode m) { return m == ModelMode::mmr ? "mmr" : "mtr"; }

inline ModelMode model_mode_from_string(std::string_view s) {
    if (s == "mmr") return ModelMode::mmr;
    if (s == "mtr") return ModelMode::mtr;
    throw ConfigError("model", "unknown model mode '" + std::string(s) + "'");
}

struct ArchConfig {
    std::size_t enc_blocks = 4;
    std::size_t enc_dim = 192;
    std::size_t enc_heads = 3;
    std::size_t enc_ffn = 0;  // 0 -> 4 * enc_dim
    std::size_t dec_blocks = 2;
    std::size_t dec_dim = 128;
    std::size_t dec_heads = 4;
    std::size_t dec_ffn = 0;  // 0 -> 4 * dec_dim
    std::size_t patch_dim = 25;
    ModelMode mode = ModelMode::mmr;

    std::size_t enc_ffn_width() const { return enc_ffn ? enc_ffn : 4 * enc_dim; }
    std::size_t dec_ffn_width() const { return dec_ffn ? dec_ffn : 4 * dec_dim; }

    // 8 x 256 encoder (4 heads, ffn 1024) with a 2 x 192 decoder.
    static ArchConfig mmr_preset(std::size_t patch_dim = 25) {
        return {8, 256, 4, 1024, 2, 192, 4, 0, patch_dim, ModelMode::mmr};
    }

    // 4 x 192 encoder (3 heads) with a 2 x 128 decoder.
    static ArchConfig mmr_light_preset(std::size_t patch_dim = 25) {
        return {4, 192, 3, 0, 2, 128, 4, 0, patch_dim, ModelMode::mmr};
    }

    void validate() const {
        if (enc_blocks == 0 || dec_blocks == 0) throw ConfigError("model", "need at least one block");
        if (enc_heads == 0 || enc_dim % enc_heads != 0) {
            throw ConfigError("model", "enc_dim must be divisible by enc_heads");
        }
        if (dec_heads == 0 || dec_dim % dec_heads != 0) {
            throw ConfigError("model", "dec_dim must be divisible by dec_heads");
        }
        if (enc_dim % 4 != 0 || dec_dim % 4 != 0) {
            throw ConfigError("model", "model widths must be divisible by 4");
        }
        if (patch_dim == 0) throw ConfigError("model", "patch_dim must be positive");
    }
};

// Named parameters in a fixed creation order.
class ModelState {
public:
    void add(std::string name, Tensor t) {
        if (index_.count(name)) throw ContractError("model", "duplicate parameter " + name);
        index_[name] = params_.size();
        params_.emplace_back(std::move(name), std::move(t));
    }

    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("model", "missing parameter " + name);
        return params_[it->second].second;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : params_) n += t.size();
        return n;
    }

    void zero_grad() const {
        for (const auto& [name, t] : params_) t.zero_grad();
    }

    ModelState clone() const {
        ModelState out;
        for (const auto& [name, t] : params_) out.add(name, Tensor(t.shape(), t.values(), true));
        return out;
    }

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::map<std::string, std::size_t> index_;
};

namespace model_detail {

inline void add_block(ModelState& s, const std::string& p, std::size_t d, std::size_t ffn,
                      std::uint64_t seed) {
    const auto normal = [&](const std::string& name, Shape shape) {
        Rng rng(derive_seed(seed, "model.init." + name));
        std::vector<double> v(numel(shape));
        for (auto& x : v) x = rng.normal(0.0, 0.02);
        s.add(name, Tensor(std::move(shape), std::move(v), true));
    };
    const auto fill = [&](const std::string& name, std::size_t n, double value) {
        s.add(name, Tensor::full({n}, value, true));
    };
    fill(p + ".ln1.g", d, 1.0);
    fill(p + ".ln1.b", d, 0.0);
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
        normal(p + ".attn." + w, {d, d});
        fill(p + ".attn.b" + std::string(w + 1), d, 0.0);
    }
    fill(p + ".ln2.g", d, 1.0);
    fill(p + ".ln2.b", d, 0.0);
    normal(p + ".ffn.w1", {d, ffn});
    fill(p + ".ffn.b1", ffn, 0.0);
    normal(p + ".ffn.w2", {ffn, d});
    fill(p + ".ffn.b2", d, 0.0);
}

}  // namespace model_detail

// Weights ~ N(0, 0.02^2); biases and the mask token start at 0; layernorm
// gains at 1.
inline ModelState init_model(const ArchConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelState s;
    const auto normal = [&](const std::string& name, Shape shape) {
        Rng rng(derive_seed(seed, "model.init." + name));
        std::vector<double> v(numel(shape));
        for (auto& x : v) x = rng.normal(0.0, 0.02);
        s.add(name, Tensor(std::move(shape), std::move(v), true));
    };
    normal("patch_embed.w", {cfg.patch_dim, cfg.enc_dim});
    s.add("patch_embed.b", Tensor::zeros({cfg.enc_dim}, true));
    for (std::size_t b = 0; b < cfg.enc_blocks; ++b) {
        model_detail::add_block(s, "enc." + std::to_string(b), cfg.enc_dim, cfg.enc_ffn_width(), seed);
    }
    s.add("enc.norm.g", Tensor::full({cfg.enc_dim}, 1.0, true));
    s.add("enc.norm.b", Tensor::zeros({cfg.enc_dim}, true));
    normal("dec_embed.w", {cfg.enc_dim, cfg.dec_dim});
    s.add("dec_embed.b", Tensor::zeros({cfg.dec_dim}, true));
    s.add("mask_token", Tensor::zeros({cfg.dec_dim}, true));
    for (std::size_t b = 0; b < cfg.dec_blocks; ++b) {
        model_detail::add_block(s, "dec." + std::to_string(b), cfg.dec_dim, cfg.dec_ffn_width(), seed);
    }
    s.add("dec.norm.g", Tensor::full({cfg.dec_dim}, 1.0, true));
    s.add("dec.norm.b", Tensor::zeros({cfg.dec_dim}, true));
    normal("head.w", {cfg.dec_dim, cfg.patch_dim});
    s.add("head.b", Tensor::zeros({cfg.patch_dim}, true));
    return s;
}

// Closed form of init_model's parameter count.
inline std::size_t param_count(const ArchConfig& cfg) {
    const auto block = [](std::size_t d, std::size_t f) {
        return 4 * (d * d + d)     // q, k, v, o projections
               + 2 * d * f + f + d  // feed-forward
               + 4 * d;             // two layernorms
    };
    const std::size_t e = cfg.enc_dim, d = cfg.dec_dim, p = cfg.patch_dim;
    return (p * e + e) + cfg.enc_blocks * block(e, cfg.enc_ffn_width()) + 2 * e + (e * d + d) + d +
           cfg.dec_blocks * block(d, cfg.dec_ffn_width()) + 2 * d + (d * p + p);
}

namespace model_detail {

inline void check_finite(const Tensor& t, const std::string& layer) {
    if (!all_finite(t)) throw NumericError("model", "non-finite activation in " + layer);
}

inline Tensor attention(const Tensor& x, const ModelState& s, const std::string& p,
                        std::size_t heads) {
    using namespace ops;
    const std::size_t d = x.dim(1), dh = d / heads;
    const Tensor q = linear(x, s.at(p + ".wq"), s.at(p + ".bq"));
    const Tensor k = linear(x, s.at(p + ".wk"), s.at(p + ".bk"));
    const Tensor v = linear(x, s.at(p + ".wv"), s.at(p + ".bv"));
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> outs;
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = slice_cols(q, h * dh, dh);
        const Tensor kh = slice_cols(k, h * dh, dh);
        const Tensor vh = slice_cols(v, h * dh, dh);
        const Tensor attn = softmax(scale(matmul_nt(qh, kh), inv));
        outs.push_back(matmul(attn, vh));
    }
    const Tensor merged = heads == 1 ? outs.front() : concat_cols(outs);
    return linear(merged, s.at(p + ".wo"), s.at(p + ".bo"));
}

// Pre-norm block: x + attn(ln(x)), then + ffn(ln(.)).
inline Tensor block(const Tensor& x, const ModelState& s, const std::string& p, std::size_t heads) {
    using namespace ops;
    const Tensor h = add(x, attention(layernorm(x, s.at(p + ".ln1.g"), s.at(p + ".ln1.b")), s,
                                      p + ".attn", heads));
    const Tensor n2 = layernorm(h, s.at(p + ".ln2.g"), s.at(p + ".ln2.b"));
    const Tensor f = linear(gelu(linear(n2, s.at(p + ".ffn.w1"), s.at(p + ".ffn.b1"))),
                            s.at(p + ".ffn.w2"), s.at(p + ".ffn.b2"));
    Tensor out = add(h, f);
    check_finite(out, p);
    return out;
}

inline Tensor pos_tensor(const PosEmbed& pe) { return Tensor({pe.n, pe.dim}, pe.table); }

inline Tensor rows_tensor(const Patches& patches) {
    return Tensor({patches.n, patches.dim}, patches.values);
}

inline Tensor encoder(const Tensor& tokens, const Tensor& pos, const ModelState& s,
                      const ArchConfig& cfg) {
    using namespace ops;
    Tensor x = add(linear(tokens, s.at("patch_embed.w"), s.at("patch_embed.b")), pos);
    check_finite(x, "patch_embed");
    for (std::size_t b = 0; b < cfg.enc_blocks; ++b) {
        x = block(x, s, "enc." + std::to_string(b), cfg.enc_heads);
    }
    return layernorm(x, s.at("enc.norm.g"), s.at("enc.norm.b"));
}

}  // namespace model_detail

struct MaeOutput {
    Tensor pred;  // [n_patches x patch_dim], every position
    Tensor loss;  // scalar
};

// Mean over masked patches of the squared error summed within each patch.
inline Tensor loss_mmr(const Tensor& pred, const Patches& target, const MaskPlan& plan) {
    if (plan.masked.empty()) throw ConfigError("model", "loss over an empty masked set");
    if (pred.rank() != 2 || pred.dim(0) != target.n || pred.dim(1) != target.dim) {
        throw ShapeError("model", "prediction shape does not match target patches");
    }
    std::vector<double> rows;
    rows.reserve(plan.masked.size() * target.dim);
    for (std::size_t p : plan.masked) {
        if (p >= target.n) throw ShapeError("model", "mask index out of range");
        rows.insert(rows.end(), target.patch(p), target.patch(p) + target.dim);
    }
    const Tensor truth({plan.masked.size(), target.dim}, std::move(rows));
    const Tensor diff = ops::sub(ops::gather_rows(pred, plan.masked), truth);
    return ops::scale(ops::sum(ops::square(diff)), 1.0 / static_cast<double>(plan.masked.size()));
}

// Visible patches -> encoder -> decoder over the full sequence with mask
// tokens -> per-patch head. `target` defaults to the input patches.
inline MaeOutput forward_mae(const Patches& patches, const MaskPlan& plan, const PosEmbed& enc_pos,
                             const PosEmbed& dec_pos, const ModelState& state,
                             const ArchConfig& cfg, const Patches* target = nullptr) {
    using namespace ops;
    using namespace model_detail;
    if (patches.dim != cfg.patch_dim) throw ShapeError("model", "patch_dim does not match config");
    if (plan.n_patches() != patches.n || enc_pos.n != patches.n || dec_pos.n != patches.n) {
        throw ShapeError("model", "mask plan or positional table does not match patch count");
    }
    if (enc_pos.dim != cfg.enc_dim || dec_pos.dim != cfg.dec_dim) {
        throw ShapeError("model", "positional table width does not match model width");
    }
    const Tensor all = rows_tensor(patches);
    const Tensor vis_tokens = gather_rows(all, plan.visible);
    const Tensor vis_pos = gather_rows(pos_tensor(enc_pos), plan.visible);
    const Tensor latent = encoder(vis_tokens, vis_pos, state, cfg);

    const Tensor vis_dec = linear(latent, state.at("dec_embed.w"), state.at("dec_embed.b"));
    const Tensor masks = repeat_rows(state.at("mask_token"), plan.masked.size());
    // Concatenation order is [visible..., masked...]; permute back to patch order.
    std::vector<std::size_t> order(patches.n);
    for (std::size_t i = 0; i < plan.visible.size(); ++i) order[plan.visible[i]] = i;
    for (std::size_t i = 0; i < plan.masked.size(); ++i) {
        order[plan.masked[i]] = plan.visible.size() + i;
    }
    Tensor x = add(gather_rows(concat_rows({vis_dec, masks}), order), pos_tensor(dec_pos));
    for (std::size_t b = 0; b < cfg.dec_blocks; ++b) {
        x = block(x, state, "dec." + std::to_string(b), cfg.dec_heads);
    }
    x = layernorm(x, state.at("dec.norm.g"), state.at("dec.norm.b"));
    Tensor pred = linear(x, state.at("head.w"), state.at("head.b"));
    check_finite(pred, "head");
    Tensor loss = loss_mmr(pred, target ? *target : patches, plan);
    return {pred, loss};
}

// Mean-pooled encoder output over the full, unmasked token sequence.
inline std::vector<double> encode(const Patches& patches, const PosEmbed& enc_pos,
                                  const ModelState& state, const ArchConfig& cfg) {
    using namespace model_detail;
    if (patches.dim != cfg.patch_dim) throw ShapeError("model", "patch_dim does not match config");
    if (enc_pos.n != patches.n || enc_pos.dim != cfg.enc_dim) {
        throw ShapeError("model", "positional table does not match patches");
    }
    const Tensor out = ops::mean_rows(encoder(rows_tensor(patches), pos_tensor(enc_pos), state, cfg));
    return out.values();
}

// Time-domain baseline: the same autoencoder over raw-waveform patches.
inline MaeOutput mtr_forward(const std::vector<double>& raw_segment, const MaskPlan& plan,
                             const ModelState& state, const ArchConfig& cfg) {
    const auto grid = PatchGrid::make(1, raw_segment.size(), 1, cfg.patch_dim);
    const auto patches = patchify_raw(raw_segment, grid);
    return forward_mae(patches, plan, pos_embed(grid, cfg.enc_dim), pos_embed(grid, cfg.dec_dim),
                       state, cfg);
}

}  // namespace mmr

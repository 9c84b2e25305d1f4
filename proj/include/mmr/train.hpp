#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "mmr/error.hpp"
#include "mmr/model.hpp"
#include "mmr/pipeline.hpp"
#include "mmr/rng.hpp"
#include "mmr/synth.hpp"
#include "mmr/tensor.hpp"
#include "mmr/tokenizer.hpp"

namespace mmr {

struct AugSpec {
    double p_flip = 0.5;
    double noise_std = 0.05;
    double stretch_min = 0.8;
    double stretch_max = 1.25;

    void validate() const {
        if (!(p_flip >= 0.0 && p_flip <= 1.0)) throw ConfigError("train", "p_flip must be in [0,1]");
        if (!(noise_std >= 0.0)) throw ConfigError("train", "noise_std must be non-negative");
        if (!(stretch_min > 0.0 && stretch_min <= stretch_max)) {
            throw ConfigError("train", "stretch range must satisfy 0 < min <= max");
        }
    }

    static AugSpec none() { return {0.0, 0.0, 1.0, 1.0}; }
};

namespace train_detail {

// Mirror index without repeating the edge sample, periodic in 2(n-1).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    i %= period;
    if (i < 0) i += period;
    if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
    return static_cast<std::size_t>(i);
}

}  // namespace train_detail

// Rescales the time axis by `factor` with linear interpolation, then
// center-crops or reflect-pads back to the input length.
inline std::vector<double> stretch(const std::vector<double>& x, double factor) {
    const std::size_t n = x.size();
    if (n < 2 || factor == 1.0) return x;
    const auto len = static_cast<std::size_t>(
        std::max<long long>(2, std::llround(static_cast<double>(n) * factor)));
    std::vector<double> y(len);
    for (std::size_t i = 0; i < len; ++i) {
        const double pos = std::min(static_cast<double>(i) / factor, static_cast<double>(n - 1));
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, n - 1);
        const double w = pos - static_cast<double>(lo);
        y[i] = (1.0 - w) * x[lo] + w * x[hi];
    }
    std::vector<double> out(n);
    if (len >= n) {
        const std::size_t start = (len - n) / 2;
        std::copy(y.begin() + static_cast<std::ptrdiff_t>(start),
                  y.begin() + static_cast<std::ptrdiff_t>(start + n), out.begin());
    } else {
        const auto left = static_cast<std::ptrdiff_t>((n - len) / 2);
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = y[train_detail::reflect_index(static_cast<std::ptrdiff_t>(i) - left, len)];
        }
    }
    return out;
}

// Flip, additive noise, then temporal stretch.
inline std::vector<double> augment(const std::vector<double>& x, const AugSpec& spec, Rng& rng) {
    std::vector<double> y = x;
    if (spec.p_flip > 0.0 && rng.bernoulli(spec.p_flip)) std::reverse(y.begin(), y.end());
    if (spec.noise_std > 0.0) {
        for (auto& v : y) v += rng.normal(0.0, spec.noise_std);
    }
    if (spec.stretch_min != spec.stretch_max) {
        y = stretch(y, rng.uniform(spec.stretch_min, spec.stretch_max));
    } else if (spec.stretch_min != 1.0) {
        y = stretch(y, spec.stretch_min);
    }
    return y;
}

struct TrainConfig {
    double base_lr = 1e-4;
    double weight_decay = 1e-5;
    std::size_t batch_size = 32;
    std::size_t total_steps = 500;
    double warmup_frac = 0.10;
    double grad_clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    double mask_ratio = 0.75;
    MaskStrategy mask_strategy = MaskStrategy::random;
    AugSpec aug;
    std::size_t log_every = 10;

    std::size_t warmup_steps() const {
        return static_cast<std::size_t>(std::llround(warmup_frac * static_cast<double>(total_steps)));
    }

    void validate() const {
        if (!(base_lr > 0.0)) throw ConfigError("train", "base_lr must be positive");
        if (!(weight_decay >= 0.0)) throw ConfigError("train", "weight_decay must be non-negative");
        if (batch_size == 0) throw ConfigError("train", "batch_size must be positive");
        if (total_steps == 0) throw ConfigError("train", "total_steps must be positive");
        if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) {
            throw ConfigError("train", "warmup_frac must be in (0,1)");
        }
        if (!(grad_clip_norm > 0.0)) throw ConfigError("train", "grad_clip_norm must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("train", "betas must be in [0,1)");
        }
        if (!(eps > 0.0)) throw ConfigError("train", "eps must be positive");
        if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
            throw ConfigError("train", "mask_ratio must be in (0,1)");
        }
        if (log_every == 0) throw ConfigError("train", "log_every must be positive");
        aug.validate();
    }
};

// Linear warmup to base_lr, then half-cosine decay to 0 at total_steps.
inline double lr_at(std::size_t step, const TrainConfig& cfg) {
    if (step > cfg.total_steps) {
        throw ContractError("train", "step " + std::to_string(step) + " beyond total_steps " +
                                         std::to_string(cfg.total_steps));
    }
    const std::size_t warm = cfg.warmup_steps();
    if (step < warm) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warm);
    const double progress =
        static_cast<double>(step - warm) / static_cast<double>(cfg.total_steps - warm);
    return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;

    static AdamState zeros_like(const ModelState& state) {
        AdamState s;
        for (const auto& [name, t] : state.params()) {
            s.m.emplace_back(t.size(), 0.0);
            s.v.emplace_back(t.size(), 0.0);
        }
        return s;
    }
};

inline double global_grad_norm(const ModelState& state) {
    double ss = 0.0;
    for (const auto& [name, t] : state.params()) {
        if (!t.has_grad()) continue;
        for (double g : t.grad()) ss += g * g;
    }
    return std::sqrt(ss);
}

// Scales every gradient so the global L2 norm is at most max_norm; returns
// the norm before clipping.
inline double clip_gradients(const ModelState& state, double max_norm) {
    const double norm = global_grad_norm(state);
    if (!std::isfinite(norm)) throw NumericError("train", "non-finite gradient; step aborted");
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (const auto& [name, t] : state.params()) {
            if (!t.has_grad()) continue;
            for (auto& g : t.grad()) g *= s;
        }
    }
    return norm;
}

// Clip, decoupled weight decay, bias-corrected Adam update. Returns the
// pre-clip gradient norm.
inline double adamw_step(const ModelState& state, AdamState& opt, double lr, const TrainConfig& cfg) {
    const auto& params = state.params();
    if (opt.m.size() != params.size()) throw ShapeError("train", "optimizer state does not match model");
    const double norm = clip_gradients(state, cfg.grad_clip_norm);
    ++opt.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k].second;
        auto& w = p.values();
        auto& m = opt.m[k];
        auto& v = opt.v[k];
        if (m.size() != w.size()) throw ShapeError("train", "optimizer state does not match model");
        const bool has = p.has_grad();
        const double decay = 1.0 - lr * cfg.weight_decay;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = has ? p.grad()[i] : 0.0;
            w[i] *= decay;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
        }
    }
    return norm;
}

struct LossRecord {
    std::size_t step = 0;  // 1-based update count
    double lr = 0.0;
    double loss = 0.0;
};

inline void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& curve) {
    os << "step,lr,loss\n";
    char buf[96];
    for (const auto& r : curve) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.lr, r.loss);
        os << buf;
    }
}

struct PretrainResult {
    ModelState state;
    AdamState opt;
    std::vector<LossRecord> curve;
    std::size_t attempted = 0;
    std::size_t skipped = 0;
};

namespace train_detail {

struct Positions {
    PosEmbed enc;
    PosEmbed dec;
    PatchGrid grid;
    bool ready = false;

    void ensure(const PatchGrid& g, const ArchConfig& arch) {
        if (ready && g.map_rows == grid.map_rows && g.map_cols == grid.map_cols &&
            g.patch_rows == grid.patch_rows && g.patch_cols == grid.patch_cols) {
            return;
        }
        grid = g;
        enc = pos_embed(g, arch.enc_dim);
        dec = pos_embed(g, arch.dec_dim);
        ready = true;
    }
};

inline void check_patch_dim(const MapSpec& spec, const ArchConfig& arch) {
    if (spec.patch_dim(arch.mode) != arch.patch_dim) {
        throw ConfigError("train", "arch.patch_dim " + std::to_string(arch.patch_dim) +
                                       " does not match the tokenizer patch size " +
                                       std::to_string(spec.patch_dim(arch.mode)));
    }
}

}  // namespace train_detail

// Per segment: augment -> tokenize -> mask -> forward. Mini-batch losses are
// averaged on one tape, then clipped and applied with AdamW at lr_at(step).
inline PretrainResult pretrain(const std::vector<Segment>& data, const ArchConfig& arch,
                               const MapSpec& spec, const TrainConfig& cfg,
                               const std::function<void(const LossRecord&)>& on_log = {}) {
    if (data.empty()) throw ConfigError("train", "empty pretraining dataset");
    arch.validate();
    cfg.validate();
    train_detail::check_patch_dim(spec, arch);

    PretrainResult res;
    res.state = init_model(arch, derive_seed(cfg.seed, "model.init"));
    res.opt = AdamState::zeros_like(res.state);
    train_detail::Positions pos;

    std::vector<std::size_t> order(data.size());
    std::size_t cursor = order.size(), epoch = 0;
    auto next_index = [&] {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            auto rng = derive_rng(cfg.seed, "train.shuffle", epoch++);
            rng.shuffle(order);
            cursor = 0;
        }
        return order[cursor++];
    };

    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        res.state.zero_grad();
        Tape tape;
        std::vector<Tensor> losses;
        {
            TapeScope scope(tape);
            for (std::size_t b = 0; b < cfg.batch_size; ++b) {
                const std::size_t draw = step * cfg.batch_size + b;
                const Segment& seg = data[next_index()];
                ++res.attempted;
                auto rng = derive_rng(cfg.seed, "train.augment", draw);
                Tokens tok;
                try {
                    tok = tokenize(augment(seg.samples, cfg.aug, rng), seg.fs_hz, spec, arch.mode);
                } catch (const DegenerateSegment&) {
                    ++res.skipped;
                    continue;
                }
                pos.ensure(tok.grid, arch);
                const auto plan = make_mask(tok.patches.n, tok.grid, tok.band_meta, cfg.mask_strategy,
                                            cfg.mask_ratio, derive_seed(cfg.seed, "train.mask", draw));
                losses.push_back(
                    forward_mae(tok.patches, plan, pos.enc, pos.dec, res.state, arch).loss);
            }
            if (2 * res.skipped > res.attempted) {
                throw DegenerateSegment("train", std::to_string(res.skipped) + " of " +
                                                     std::to_string(res.attempted) +
                                                     " segments skipped; run aborted");
            }
            if (losses.empty()) continue;
            Tensor total = losses.front();
            for (std::size_t i = 1; i < losses.size(); ++i) total = ops::add(total, losses[i]);
            const Tensor loss = ops::scale(total, 1.0 / static_cast<double>(losses.size()));
            tape.backward(loss);
            const double lr = lr_at(step + 1, cfg);
            adamw_step(res.state, res.opt, lr, cfg);
            const std::size_t update = step + 1;
            if (update % cfg.log_every == 0 || update == 1 || update == cfg.total_steps) {
                res.curve.push_back({update, lr, loss.item()});
                if (on_log) on_log(res.curve.back());
            }
        }
    }
    return res;
}

// Mean masked-patch reconstruction loss on clean inputs, with masks drawn
// from `seed` per segment index; degenerate segments are skipped.
inline double masked_reconstruction_loss(const std::vector<Segment>& data, const ModelState& state,
                                         const ArchConfig& arch, const MapSpec& spec,
                                         double mask_ratio, MaskStrategy strategy,
                                         std::uint64_t seed) {
    train_detail::check_patch_dim(spec, arch);
    train_detail::Positions pos;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        Tokens tok;
        try {
            tok = tokenize(data[i].samples, data[i].fs_hz, spec, arch.mode);
        } catch (const DegenerateSegment&) {
            continue;
        }
        pos.ensure(tok.grid, arch);
        const auto plan = make_mask(tok.patches.n, tok.grid, tok.band_meta, strategy, mask_ratio,
                                    derive_seed(seed, "eval.mask", i));
        sum += forward_mae(tok.patches, plan, pos.enc, pos.dec, state, arch).loss.item();
        ++n;
    }
    if (n == 0) throw DegenerateSegment("train", "no usable segments for evaluation");
    return sum / static_cast<double>(n);
}

// Frozen-encoder embedding of a clean, unmasked segment.
inline std::vector<double> embed_segment(const Segment& seg, const ModelState& state,
                                         const ArchConfig& arch, const MapSpec& spec) {
    train_detail::check_patch_dim(spec, arch);
    const auto tok = tokenize(seg.samples, seg.fs_hz, spec, arch.mode);
    return encode(tok.patches, pos_embed(tok.grid, arch.enc_dim), state, arch);
}

}  // namespace mmr

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mmr/model.hpp"
#include "mmr/rng.hpp"

namespace {

using mmr::ArchConfig;
using mmr::MaskStrategy;
using mmr::Tensor;

ArchConfig micro_config() {
    ArchConfig cfg;
    cfg.enc_blocks = 1;
    cfg.enc_dim = 8;
    cfg.enc_heads = 1;
    cfg.dec_blocks = 1;
    cfg.dec_dim = 8;
    cfg.dec_heads = 1;
    cfg.patch_dim = 25;
    return cfg;
}

// Two-band map with four (1, 25) patches.
struct Fixture {
    mmr::PatchGrid grid = mmr::PatchGrid::make(2, 50, 1, 25);
    mmr::Patches patches;
    mmr::MaskPlan plan;
    mmr::PosEmbed enc_pos, dec_pos;

    Fixture(const ArchConfig& cfg, std::uint64_t seed, double ratio = 0.5) {
        mmr::Rng rng(seed);
        std::vector<std::vector<double>> map(2, std::vector<double>(50));
        for (auto& row : map) {
            for (auto& v : row) v = rng.normal();
        }
        patches = mmr::patchify(map, grid);
        plan = mmr::make_mask(patches.n, grid, {}, MaskStrategy::random, ratio, seed);
        enc_pos = mmr::pos_embed(grid, cfg.enc_dim);
        dec_pos = mmr::pos_embed(grid, cfg.dec_dim);
    }
};

// Replaces every parameter with N(0, sd^2) draws so gradients are not tiny.
void randomize(const mmr::ModelState& state, double sd, std::uint64_t seed) {
    mmr::Rng rng(seed);
    for (const auto& [name, t] : state.params()) {
        Tensor h = t;
        for (auto& v : h.values()) v = rng.normal(0.0, sd);
    }
}

mmr::Patches random_patches(std::size_t n, std::size_t dim, std::uint64_t seed) {
    mmr::Rng rng(seed);
    mmr::Patches p{n, dim, std::vector<double>(n * dim)};
    for (auto& v : p.values) v = rng.normal();
    return p;
}

mmr::MaskPlan plan_from(std::vector<std::size_t> masked, std::size_t n) {
    mmr::MaskPlan plan;
    std::vector<bool> is_masked(n, false);
    for (auto m : masked) is_masked[m] = true;
    for (std::size_t p = 0; p < n; ++p) (is_masked[p] ? plan.masked : plan.visible).push_back(p);
    plan.ratio = static_cast<double>(plan.masked.size()) / static_cast<double>(n);
    return plan;
}

}  // namespace

TEST(LossMmr, PerfectPredictionIsZero) {
    const auto truth = random_patches(8, 25, 1);
    const auto plan = plan_from({1, 4, 6}, 8);
    EXPECT_EQ(mmr::loss_mmr(Tensor({8, 25}, truth.values), truth, plan).item(), 0.0);
}

TEST(LossMmr, UnitOffsetGivesPatchDim) {
    const auto truth = random_patches(8, 25, 1);
    auto shifted = truth.values;
    for (auto& v : shifted) v += 1.0;
    const auto plan = plan_from({0, 2, 3, 7}, 8);
    EXPECT_NEAR(mmr::loss_mmr(Tensor({8, 25}, shifted), truth, plan).item(), 25.0, 1e-12);
}

TEST(LossMmr, MatchesDoubleLoopOracle) {
    const auto truth = random_patches(12, 25, 2), pred = random_patches(12, 25, 3);
    const auto plan = plan_from({0, 5, 6, 9, 11}, 12);
    double oracle = 0.0;
    for (std::size_t p : plan.masked) {
        for (std::size_t i = 0; i < 25; ++i) {
            const double d = pred.values[p * 25 + i] - truth.values[p * 25 + i];
            oracle += d * d;
        }
    }
    oracle /= 5.0;
    EXPECT_NEAR(mmr::loss_mmr(Tensor({12, 25}, pred.values), truth, plan).item(), oracle, 1e-12);
}

TEST(LossMmr, BandSplitFormIsEqual) {
    // Grid rows 0..1 are detail bands, row 2 the approximation band.
    const auto grid = mmr::PatchGrid::make(3, 100, 1, 25);
    const auto truth = random_patches(12, 25, 4), pred = random_patches(12, 25, 5);
    const auto plan = mmr::make_mask(12, grid, {}, MaskStrategy::random, 0.75, 6);
    double detail = 0.0, approx = 0.0;
    for (std::size_t p : plan.masked) {
        double e = 0.0;
        for (std::size_t i = 0; i < 25; ++i) e += std::pow(pred.values[p * 25 + i] - truth.values[p * 25 + i], 2);
        (grid.row_of(p) < 2 ? detail : approx) += e;
    }
    const double split = (detail + approx) / static_cast<double>(plan.masked.size());
    EXPECT_NEAR(mmr::loss_mmr(Tensor({12, 25}, pred.values), truth, plan).item(), split, 1e-12);
}

TEST(LossMmr, EmptyMaskRejected) {
    const auto truth = random_patches(4, 25, 1);
    EXPECT_THROW(mmr::loss_mmr(Tensor({4, 25}, truth.values), truth, plan_from({}, 4)), mmr::ConfigError);
}

TEST(ForwardMae, SingleMaskedPatchIsPlainSquaredError) {
    const auto cfg = micro_config();
    Fixture fx(cfg, 3);
    fx.plan = plan_from({2}, 4);
    const auto state = mmr::init_model(cfg, 1);
    const auto out = mmr::forward_mae(fx.patches, fx.plan, fx.enc_pos, fx.dec_pos, state, cfg);
    double e = 0.0;
    for (std::size_t i = 0; i < 25; ++i) e += std::pow(out.pred.values()[2 * 25 + i] - fx.patches.values[2 * 25 + i], 2);
    EXPECT_NEAR(out.loss.item(), e, 1e-12);
}

TEST(ForwardMae, ZeroHeadPredictsBias) {
    const auto cfg = micro_config();
    Fixture fx(cfg, 4);
    const auto state = mmr::init_model(cfg, 2);
    Tensor w = state.at("head.w");
    std::fill(w.values().begin(), w.values().end(), 0.0);
    const auto out = mmr::forward_mae(fx.patches, fx.plan, fx.enc_pos, fx.dec_pos, state, cfg);
    for (double v : out.pred.values()) EXPECT_EQ(v, 0.0);
    double energy = 0.0;
    for (std::size_t p : fx.plan.masked) {
        for (std::size_t i = 0; i < 25; ++i) energy += std::pow(fx.patches.values[p * 25 + i], 2);
    }
    EXPECT_NEAR(out.loss.item(), energy / static_cast<double>(fx.plan.masked.size()), 1e-12);
}

TEST(ForwardMae, FullGradientMatchesFiniteDifferences) {
    const auto cfg = micro_config();
    Fixture fx(cfg, 5);
    const auto state = mmr::init_model(cfg, 3);
    randomize(state, 0.3, 99);
    const auto loss_of = [&] {
        return mmr::forward_mae(fx.patches, fx.plan, fx.enc_pos, fx.dec_pos, state, cfg).loss.item();
    };
    state.zero_grad();
    {
        mmr::Tape tape;
        mmr::TapeScope scope(tape);
        tape.backward(mmr::forward_mae(fx.patches, fx.plan, fx.enc_pos, fx.dec_pos, state, cfg).loss);
    }
    const double h = 1e-5;
    std::size_t checked = 0;
    for (const auto& [name, t] : state.params()) {
        Tensor p = t;
        const std::vector<double> analytic = t.grad();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p.values()[i];
            p.values()[i] = keep + h;
            const double up = loss_of();
            p.values()[i] = keep - h;
            const double down = loss_of();
            p.values()[i] = keep;
            const double numeric = (up - down) / (2 * h);
            const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-4});
            ASSERT_LT(std::abs(numeric - analytic[i]) / denom, 1e-3) << name << "[" << i << "]";
            ++checked;
        }
    }
    EXPECT_EQ(checked, mmr::param_count(cfg));
}

TEST(ForwardMae, VisibleTargetsDoNotSupervise) {
    const auto cfg = micro_config();
    Fixture fx(cfg, 6);
    const auto state = mmr::init_model(cfg, 4);
    randomize(state, 0.2, 5);
    auto run = [&](const mmr::Patches& target) {
        state.zero_grad();
        mmr::Tape tape;
        mmr::TapeScope scope(tape);
        const auto out = mmr::forward_mae(fx.patches, fx.plan, fx.enc_pos, fx.dec_pos, state, cfg, &target);
        tape.backward(out.loss);
        std::vector<double> grads;
        for (const auto& [name, t] : state.params()) grads.insert(grads.end(), t.grad().begin(), t.grad().end());
        return std::make_pair(out.loss.item(), grads);
    };
    const auto base = run(fx.patches);
    auto perturbed = fx.patches;
    for (std::size_t p : fx.plan.visible) {
        for (std::size_t i = 0; i < 25; ++i) perturbed.values[p * 25 + i] += 10.0;
    }
    const auto moved = run(perturbed);
    EXPECT_EQ(base.first, moved.first);
    EXPECT_EQ(base.second, moved.second);
}

TEST(ForwardMae, Deterministic) {
    const auto cfg = micro_config();
    Fixture fx(cfg, 7);
    const auto a = mmr::init_model(cfg, 11), b = mmr::init_model(cfg, 11);
    EXPECT_EQ(mmr::forward_mae(fx.patches, fx.plan, fx.enc_pos, fx.dec_pos, a, cfg).loss.item(),
              mmr::forward_mae(fx.patches, fx.plan, fx.enc_pos, fx.dec_pos, b, cfg).loss.item());
}

TEST(ForwardMae, NanNamesLayer) {
    const auto cfg = micro_config();
    Fixture fx(cfg, 8);
    const auto state = mmr::init_model(cfg, 1);
    Tensor w = state.at("patch_embed.w");
    w.values()[0] = std::nan("");
    try {
        mmr::forward_mae(fx.patches, fx.plan, fx.enc_pos, fx.dec_pos, state, cfg);
        FAIL() << "expected NumericError";
    } catch (const mmr::NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("patch_embed"), std::string::npos);
    }
}

TEST(ForwardMae, ShapeMismatchRejected) {
    const auto cfg = micro_config();
    Fixture fx(cfg, 9);
    const auto state = mmr::init_model(cfg, 1);
    const auto wide = mmr::pos_embed(fx.grid, 16);
    EXPECT_THROW(mmr::forward_mae(fx.patches, fx.plan, wide, fx.dec_pos, state, cfg), mmr::ShapeError);
    EXPECT_THROW(mmr::forward_mae(fx.patches, plan_from({0}, 3), fx.enc_pos, fx.dec_pos, state, cfg),
                 mmr::ShapeError);
}

TEST(Encode, PermutationInvariant) {
    const auto cfg = micro_config();
    Fixture fx(cfg, 10);
    const auto state = mmr::init_model(cfg, 5);
    randomize(state, 0.3, 6);
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    mmr::Patches pp = fx.patches;
    mmr::PosEmbed pe = fx.enc_pos;
    for (std::size_t i = 0; i < 4; ++i) {
        std::copy_n(fx.patches.patch(perm[i]), 25, pp.values.begin() + static_cast<long>(i * 25));
        std::copy_n(fx.enc_pos.row(perm[i]), cfg.enc_dim, pe.table.begin() + static_cast<long>(i * cfg.enc_dim));
    }
    const auto a = mmr::encode(fx.patches, fx.enc_pos, state, cfg);
    const auto b = mmr::encode(pp, pe, state, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
}

TEST(Encode, IdenticalInputsGiveIdenticalEmbeddings) {
    const auto cfg = micro_config();
    Fixture fx(cfg, 11);
    const auto state = mmr::init_model(cfg, 5);
    EXPECT_EQ(mmr::encode(fx.patches, fx.enc_pos, state, cfg), mmr::encode(fx.patches, fx.enc_pos, state, cfg));
}

TEST(Encode, PresetEmbeddingWidth) {
    const auto cfg = ArchConfig::mmr_preset();
    const auto grid = mmr::PatchGrid::make(2, 1000, 1, 25);
    const auto state = mmr::init_model(cfg, 1);
    const auto patches = random_patches(grid.n_patches(), 25, 1);
    EXPECT_EQ(mmr::encode(patches, mmr::pos_embed(grid, cfg.enc_dim), state, cfg).size(), 256u);
}

TEST(Mtr, FortyPatchesAndSharedLoss) {
    auto cfg = micro_config();
    cfg.mode = mmr::ModelMode::mtr;
    mmr::Rng rng(3);
    std::vector<double> raw(1000);
    for (auto& v : raw) v = rng.normal();
    const auto grid = mmr::PatchGrid::make(1, 1000, 1, 25);
    EXPECT_EQ(grid.n_patches(), 40u);
    const auto plan = mmr::make_mask(40, grid, {}, MaskStrategy::random, 0.75, 2);
    const auto state = mmr::init_model(cfg, 4);
    const auto out = mmr::mtr_forward(raw, plan, state, cfg);
    EXPECT_EQ(out.pred.dim(0), 40u);
    const auto same = mmr::forward_mae(mmr::patchify_raw(raw, grid), plan, mmr::pos_embed(grid, cfg.enc_dim),
                                       mmr::pos_embed(grid, cfg.dec_dim), state, cfg);
    EXPECT_EQ(out.loss.item(), same.loss.item());
    EXPECT_THROW(mmr::mtr_forward(std::vector<double>(1010, 0.0), plan, state, cfg), mmr::ShapeError);
}

TEST(ParamCount, MatchesInstantiatedModel) {
    for (const auto& cfg : {micro_config(), ArchConfig::mmr_light_preset(), ArchConfig::mmr_preset(50)}) {
        EXPECT_EQ(mmr::init_model(cfg, 1).count(), mmr::param_count(cfg));
    }
}

TEST(ParamCount, PresetsFrozen) {
    // Hand sums of the layer shapes.
    EXPECT_EQ(mmr::param_count(ArchConfig::mmr_preset()), 7269721u);
    EXPECT_EQ(mmr::param_count(ArchConfig::mmr_light_preset()), 2209689u);
    const auto full = mmr::param_count(ArchConfig::mmr_preset());
    const auto light = mmr::param_count(ArchConfig::mmr_light_preset());
    EXPECT_GE(full, 6'000'000u);
    EXPECT_LE(full, 8'000'000u);
    EXPECT_GE(light, 1'500'000u);
    EXPECT_LE(light, 2'500'000u);
}

TEST(ParamCount, DecoderFfnDefault) {
    const auto cfg = ArchConfig::mmr_preset();
    EXPECT_EQ(cfg.dec_ffn_width(), 4 * cfg.dec_dim);
}

TEST(Init, Conventions) {
    const auto state = mmr::init_model(micro_config(), 1);
    for (double v : state.at("mask_token").values()) EXPECT_EQ(v, 0.0);
    for (double v : state.at("enc.0.ln1.g").values()) EXPECT_EQ(v, 1.0);
    for (double v : state.at("enc.0.attn.bq").values()) EXPECT_EQ(v, 0.0);
    const auto light = mmr::init_model(ArchConfig::mmr_light_preset(), 1);
    const auto& w = light.at("enc.0.ffn.w1").values();
    double s2 = 0.0;
    for (double v : w) s2 += v * v;
    EXPECT_NEAR(std::sqrt(s2 / static_cast<double>(w.size())), 0.02, 0.0005);
}

TEST(ArchConfigTest, Validation) {
    auto cfg = micro_config();
    cfg.enc_heads = 3;
    EXPECT_THROW(cfg.validate(), mmr::ConfigError);
    cfg = micro_config();
    cfg.dec_dim = 6;
    cfg.dec_heads = 1;
    EXPECT_THROW(cfg.validate(), mmr::ConfigError);
    EXPECT_NO_THROW(ArchConfig::mmr_preset().validate());
    EXPECT_NO_THROW(ArchConfig::mmr_light_preset().validate());
}

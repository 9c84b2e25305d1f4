#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "mmr/error.hpp"
#include "mmr/rng.hpp"

namespace mmr {

// One fixed-length 1-D physiological signal plus metadata.
struct Segment {
    std::string user_id;
    std::string segment_id;
    double fs_hz = 100.0;
    std::vector<double> samples;
    std::map<std::string, double> labels;
};

struct SynthConfig {
    double fs_hz = 100.0;
    double duration_s = 10.0;
    double hr_bpm = 72.0;
    int n_harmonics = 3;
    double dicrotic_amp = 0.3;
    double wander_amp = 0.1;
    double noise_std = 0.02;
    std::uint64_t seed = 0;
};

namespace synth {

inline constexpr double kClassThresholdBpm = 90.0;

inline std::size_t sample_count(const SynthConfig& cfg) {
    const double n = cfg.fs_hz * cfg.duration_s;
    const double rounded = std::round(n);
    if (!(n > 0.0) || std::abs(n - rounded) > 1e-9) {
        throw ConfigError("synth", "duration_s * fs_hz must be a positive integer");
    }
    return static_cast<std::size_t>(rounded);
}

inline void validate(const SynthConfig& cfg) {
    if (cfg.n_harmonics < 1) throw ConfigError("synth", "n_harmonics must be >= 1");
    if (cfg.hr_bpm <= 0.0) throw ConfigError("synth", "hr_bpm must be positive");
    if (cfg.dicrotic_amp < 0.0 || cfg.dicrotic_amp > 1.0) {
        throw ConfigError("synth", "dicrotic_amp must lie in [0, 1]");
    }
    if (cfg.noise_std < 0.0 || cfg.wander_amp < 0.0) {
        throw ConfigError("synth", "noise_std and wander_amp must be non-negative");
    }
    // The dicrotic term sits on the second harmonic.
    const int top = std::max(cfg.n_harmonics, cfg.dicrotic_amp > 0.0 ? 2 : 1);
    const double f_max = cfg.hr_bpm / 60.0 * top;
    if (!(cfg.fs_hz > 2.0 * f_max)) {
        throw ConfigError("synth", "fs_hz must exceed twice the highest synthesized harmonic (" +
                                       std::to_string(f_max) + " Hz)");
    }
    sample_count(cfg);
}

}  // namespace synth

// Sum of decaying harmonics of the heart rate, a phase-shifted second harmonic
// standing in for the dicrotic wave, slow baseline wander and white noise.
inline Segment generate_segment(const SynthConfig& cfg) {
    synth::validate(cfg);
    const std::size_t n = synth::sample_count(cfg);
    Rng rng(derive_seed(cfg.seed, "synth.segment"));

    const double f0 = cfg.hr_bpm / 60.0;
    const double two_pi = 2.0 * std::numbers::pi;

    std::vector<double> phases(static_cast<std::size_t>(cfg.n_harmonics));
    for (auto& p : phases) p = rng.uniform(0.0, two_pi);
    const double wander_hz = rng.uniform(0.05, 0.25);
    const double wander_phase = rng.uniform(0.0, two_pi);

    Segment seg;
    seg.fs_hz = cfg.fs_hz;
    seg.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.fs_hz;
        double v = 0.0;
        for (int h = 1; h <= cfg.n_harmonics; ++h) {
            v += std::sin(two_pi * h * f0 * t + phases[static_cast<std::size_t>(h - 1)]) / h;
        }
        if (cfg.dicrotic_amp > 0.0) {
            v += cfg.dicrotic_amp *
                 std::sin(two_pi * 2.0 * f0 * t + 2.0 * phases[0] + std::numbers::pi / 3.0);
        }
        if (cfg.wander_amp > 0.0) {
            v += cfg.wander_amp * std::sin(two_pi * wander_hz * t + wander_phase);
        }
        seg.samples[i] = v;
    }
    if (cfg.noise_std > 0.0) {
        for (auto& v : seg.samples) v += rng.normal(0.0, cfg.noise_std);
    }
    seg.labels["hr_bpm"] = cfg.hr_bpm;
    seg.labels["class"] = cfg.hr_bpm > synth::kClassThresholdBpm ? 1.0 : 0.0;
    return seg;
}

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    double draw(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
};

// Parameter ranges for a synthetic cohort. Users are assigned round-robin to
// the heart-rate ranges, so with two ranges the cohort is balanced.
struct CohortRanges {
    std::vector<Range> hr_bpm{{60.0, 70.0}, {110.0, 120.0}};
    double hr_jitter_bpm = 2.0;
    std::pair<int, int> n_harmonics{2, 4};
    Range dicrotic_amp{0.1, 0.4};
    Range wander_amp{0.0, 0.2};
    Range noise_std{0.01, 0.05};
    double fs_hz = 100.0;
    double duration_s = 10.0;
};

inline std::vector<Segment> generate_cohort(std::size_t n_users, std::size_t segments_per_user,
                                            const CohortRanges& ranges, std::uint64_t seed) {
    if (n_users < 1 || segments_per_user < 1) {
        throw ConfigError("synth", "cohort needs at least one user and one segment per user");
    }
    if (ranges.hr_bpm.empty()) throw ConfigError("synth", "cohort needs at least one hr range");
    if (ranges.n_harmonics.first < 1 || ranges.n_harmonics.second < ranges.n_harmonics.first) {
        throw ConfigError("synth", "invalid n_harmonics range");
    }

    std::vector<Segment> out;
    out.reserve(n_users * segments_per_user);
    for (std::size_t u = 0; u < n_users; ++u) {
        Rng user_rng = derive_rng(seed, "synth.user", u);
        const double latent_hr = ranges.hr_bpm[u % ranges.hr_bpm.size()].draw(user_rng);
        char uid[32];
        std::snprintf(uid, sizeof uid, "u%04zu", u);

        for (std::size_t s = 0; s < segments_per_user; ++s) {
            const std::uint64_t index = u * segments_per_user + s;
            Rng seg_rng = derive_rng(seed, "synth.cohort_segment", index);
            SynthConfig cfg;
            cfg.fs_hz = ranges.fs_hz;
            cfg.duration_s = ranges.duration_s;
            cfg.hr_bpm = latent_hr + seg_rng.uniform(-ranges.hr_jitter_bpm, ranges.hr_jitter_bpm);
            const auto span = static_cast<std::size_t>(ranges.n_harmonics.second -
                                                       ranges.n_harmonics.first + 1);
            cfg.n_harmonics = ranges.n_harmonics.first + static_cast<int>(seg_rng.below(span));
            cfg.dicrotic_amp = ranges.dicrotic_amp.draw(seg_rng);
            cfg.wander_amp = ranges.wander_amp.draw(seg_rng);
            cfg.noise_std = ranges.noise_std.draw(seg_rng);
            cfg.seed = seg_rng.next_u64();

            Segment seg = generate_segment(cfg);
            seg.user_id = uid;
            char sid[48];
            std::snprintf(sid, sizeof sid, "%s_s%04zu", uid, s);
            seg.segment_id = sid;
            out.push_back(std::move(seg));
        }
    }
    return out;
}

}  // namespace mmr

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmr/error.hpp"
#include "mmr/wavelet.hpp"

namespace mmr {

enum class InterpMode { zero_order, linear, cubic };
enum class NormMode { per_band_instance, global, none };

inline std::string_view to_string(InterpMode m) {
    switch (m) {
        case InterpMode::zero_order: return "zero_order";
        case InterpMode::linear: return "linear";
        case InterpMode::cubic: return "cubic";
    }
    return "?";
}

inline std::string_view to_string(NormMode m) {
    switch (m) {
        case NormMode::per_band_instance: return "per_band_instance";
        case NormMode::global: return "global";
        case NormMode::none: return "none";
    }
    return "?";
}

inline InterpMode interp_from_string(std::string_view s) {
    if (s == "zero_order") return InterpMode::zero_order;
    if (s == "linear") return InterpMode::linear;
    if (s == "cubic") return InterpMode::cubic;
    throw ConfigError("coeffmap", "unknown interpolation mode '" + std::string(s) + "'");
}

inline NormMode norm_from_string(std::string_view s) {
    if (s == "per_band_instance") return NormMode::per_band_instance;
    if (s == "global") return NormMode::global;
    if (s == "none") return NormMode::none;
    throw ConfigError("coeffmap", "unknown normalization mode '" + std::string(s) + "'");
}

struct BandMeta {
    enum class Kind { detail, approx };
    Kind kind = Kind::detail;
    int level = 0;  // j for details, J for the approximation
    double f_lo = 0.0;
    double f_hi = 0.0;
};

struct NormStats {
    double mean = 0.0;
    double std = 1.0;
};

// [C x T] coefficient image; row 0 is the highest-frequency kept band.
struct CoeffMap {
    std::vector<std::vector<double>> data;
    std::vector<BandMeta> band_meta;
    InterpMode interp = InterpMode::zero_order;
    NormMode norm = NormMode::per_band_instance;
    std::vector<NormStats> norm_stats;

    int level = 0;
    WaveletName family = WaveletName::haar;
    std::size_t original_len = 0;
    std::size_t pad = 0;

    std::size_t rows() const { return data.size(); }
    std::size_t cols() const { return data.empty() ? 0 : data.front().size(); }
};

struct KeptBand {
    BandMeta meta;
    const std::vector<double>* coeffs;
};

// Drops detail bands lying entirely at or above the bandpass upper cutoff and
// returns the rest in decreasing-frequency order.
inline std::vector<KeptBand> discard_out_of_band(const DwtDecomposition& dec, double fs_hz,
                                                 double bandpass_high_hz) {
    std::vector<KeptBand> kept;
    for (int j = 1; j <= dec.level; ++j) {
        const auto range = band_frequency_range(j, fs_hz, dec.level);
        if (range.lo >= bandpass_high_hz) continue;
        kept.push_back({{BandMeta::Kind::detail, j, range.lo, range.hi},
                        &dec.details[static_cast<std::size_t>(j - 1)]});
    }
    if (kept.empty()) {
        throw ConfigError("coeffmap", "every detail band lies above the bandpass cutoff; "
                                      "the map needs at least two rows");
    }
    const auto range = band_frequency_range(0, fs_hz, dec.level);
    kept.push_back({{BandMeta::Kind::approx, dec.level, range.lo, range.hi}, &dec.approx});
    return kept;
}

// Stretches a band to target_len. Linear and cubic modes place coefficient i
// at the centre of its block, sample coordinate (i + 0.5) * f - 0.5, and clamp
// beyond the outer knots.
inline std::vector<double> interp_band(const std::vector<double>& coeffs, std::size_t target_len,
                                       InterpMode mode) {
    const std::size_t n = coeffs.size();
    if (n == 0 || target_len % n != 0) {
        throw ShapeError("coeffmap", "target length " + std::to_string(target_len) +
                                         " is not a multiple of band length " + std::to_string(n));
    }
    const std::size_t f = target_len / n;
    std::vector<double> out(target_len);
    if (mode == InterpMode::zero_order || n == 1) {
        for (std::size_t t = 0; t < target_len; ++t) out[t] = coeffs[t / f];
        return out;
    }
    const auto at = [&](std::ptrdiff_t i) {
        i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1);
        return coeffs[static_cast<std::size_t>(i)];
    };
    const double fd = static_cast<double>(f);
    for (std::size_t t = 0; t < target_len; ++t) {
        double u = (static_cast<double>(t) + 0.5) / fd - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(n - 1));
        const auto i0 = static_cast<std::ptrdiff_t>(std::floor(u));
        const double s = u - static_cast<double>(i0);
        if (mode == InterpMode::linear) {
            out[t] = (1.0 - s) * at(i0) + s * at(i0 + 1);
        } else {
            // Catmull-Rom through the neighbouring knots.
            const double p0 = at(i0 - 1), p1 = at(i0), p2 = at(i0 + 1), p3 = at(i0 + 2);
            out[t] = 0.5 * (2.0 * p1 + (-p0 + p2) * s + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s * s +
                            (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s * s * s);
        }
    }
    return out;
}

namespace coeffmap_detail {

inline NormStats stats_of(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / n)};
}

}  // namespace coeffmap_detail

inline CoeffMap build_map(const DwtDecomposition& dec, double fs_hz, double bandpass_high_hz,
                          InterpMode interp, NormMode norm) {
    const auto kept = discard_out_of_band(dec, fs_hz, bandpass_high_hz);
    const std::size_t padded = dec.original_len + dec.pad;

    CoeffMap map;
    map.interp = interp;
    map.norm = norm;
    map.level = dec.level;
    map.family = dec.family;
    map.original_len = dec.original_len;
    map.pad = dec.pad;
    for (const auto& band : kept) {
        auto row = interp_band(*band.coeffs, padded, interp);
        row.resize(dec.original_len);
        map.data.push_back(std::move(row));
        map.band_meta.push_back(band.meta);
    }

    using coeffmap_detail::stats_of;
    switch (norm) {
        case NormMode::per_band_instance:
            for (std::size_t r = 0; r < map.rows(); ++r) {
                const auto st = stats_of(map.data[r]);
                if (!(st.std >= 1e-8)) {
                    throw DegenerateSegment("coeffmap", "band row " + std::to_string(r) +
                                                            " has standard deviation below 1e-8");
                }
                map.norm_stats.push_back(st);
            }
            break;
        case NormMode::global: {
            std::vector<double> all;
            for (const auto& row : map.data) all.insert(all.end(), row.begin(), row.end());
            const auto st = stats_of(all);
            if (!(st.std >= 1e-8)) {
                throw DegenerateSegment("coeffmap", "map standard deviation below 1e-8");
            }
            map.norm_stats.assign(map.rows(), st);
            break;
        }
        case NormMode::none:
            map.norm_stats.assign(map.rows(), NormStats{});
            break;
    }
    for (std::size_t r = 0; r < map.rows(); ++r) {
        const auto st = map.norm_stats[r];
        for (auto& v : map.data[r]) v = (v - st.mean) / st.std;
    }
    return map;
}

// Diagnostic inverse. Discarded bands come back as zeros.
inline std::vector<double> invert_map(const CoeffMap& map, std::size_t original_len) {
    if (map.interp != InterpMode::zero_order) {
        throw ConfigError("coeffmap", "invert_map supports zero_order maps only");
    }
    if (map.pad != 0) {
        throw ConfigError("coeffmap", "invert_map does not support padded decompositions");
    }
    if (original_len != map.original_len || map.cols() != original_len) {
        throw ShapeError("coeffmap", "original length does not match the map");
    }
    DwtDecomposition dec;
    dec.level = map.level;
    dec.family = map.family;
    dec.original_len = original_len;
    for (int j = 1; j <= map.level; ++j) {
        dec.details.emplace_back(original_len >> j, 0.0);
    }
    dec.approx.assign(original_len >> map.level, 0.0);

    for (std::size_t r = 0; r < map.rows(); ++r) {
        const auto& meta = map.band_meta[r];
        const std::size_t f = std::size_t{1} << meta.level;
        const auto st = map.norm_stats[r];
        std::vector<double>& band = meta.kind == BandMeta::Kind::approx
                                        ? dec.approx
                                        : dec.details[static_cast<std::size_t>(meta.level - 1)];
        for (std::size_t i = 0; i < band.size(); ++i) {
            band[i] = map.data[r][i * f] * st.std + st.mean;
        }
    }
    return waverec(dec);
}

}  // namespace mmr

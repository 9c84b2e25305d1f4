#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmr/error.hpp"

namespace mmr {

enum class WaveletName { haar, db4, bior2_2, bior4_4 };

inline std::string_view to_string(WaveletName w) {
    switch (w) {
        case WaveletName::haar: return "haar";
        case WaveletName::db4: return "db4";
        case WaveletName::bior2_2: return "bior2.2";
        case WaveletName::bior4_4: return "bior4.4";
    }
    return "?";
}

inline WaveletName wavelet_from_string(std::string_view s) {
    if (s == "haar") return WaveletName::haar;
    if (s == "db4") return WaveletName::db4;
    if (s == "bior2.2" || s == "bior2_2") return WaveletName::bior2_2;
    if (s == "bior4.4" || s == "bior4_4") return WaveletName::bior4_4;
    throw ConfigError("wavelet", "unknown wavelet family '" + std::string(s) + "'");
}

// Analysis (dec) and synthesis (rec) filter banks. Taps follow the usual
// published tables with sum(dec_lo) = sqrt(2).
struct WaveletFamily {
    WaveletName name;
    std::vector<double> dec_lo, dec_hi, rec_lo, rec_hi;

    bool orthogonal() const { return name == WaveletName::haar || name == WaveletName::db4; }
    std::size_t length() const { return dec_lo.size(); }
};

namespace wavelet_detail {

// Quadrature mirror: rec_lo = reverse(dec_lo), hi filters by alternating flip.
inline WaveletFamily orthogonal_family(WaveletName name, std::vector<double> dec_lo) {
    const std::size_t n = dec_lo.size();
    WaveletFamily f{name, dec_lo, {}, {}, {}};
    f.rec_lo.assign(dec_lo.rbegin(), dec_lo.rend());
    f.rec_hi.resize(n);
    f.dec_hi.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        f.rec_hi[k] = (k % 2 == 0 ? 1.0 : -1.0) * dec_lo[k];
    }
    f.dec_hi.assign(f.rec_hi.rbegin(), f.rec_hi.rend());
    return f;
}

}  // namespace wavelet_detail

inline WaveletFamily make_wavelet(WaveletName name) {
    using wavelet_detail::orthogonal_family;
    switch (name) {
        case WaveletName::haar: {
            const double s = 1.0 / std::sqrt(2.0);
            return orthogonal_family(name, {s, s});
        }
        case WaveletName::db4:
            return orthogonal_family(
                name, {-0.010597401784997278, 0.032883011666982945, 0.030841381835986965,
                       -0.18703481171888114, -0.02798376941698385, 0.6308807679295904,
                       0.7148465705525415, 0.23037781330885523});
        case WaveletName::bior2_2: {
            const double a = 0.1767766952966369, b = 0.3535533905932738;
            const double c = 1.0606601717798214, d = 0.7071067811865476;
            return {name,
                    {0.0, -a, b, c, b, -a},
                    {0.0, b, -d, b, 0.0, 0.0},
                    {0.0, b, d, b, 0.0, 0.0},
                    {0.0, a, b, -c, b, a}};
        }
        case WaveletName::bior4_4: {
            const double a = 0.03782845550726404, b = 0.023849465019556843;
            const double c = 0.11062440441843718, d = 0.37740285561283066;
            const double e = 0.8526986790088938;
            const double p = 0.06453888262869706, q = 0.04068941760916406;
            const double r = 0.41809227322161724, s = 0.7884856164055829;
            return {name,
                    {0.0, a, -b, -c, d, e, d, -c, -b, a},
                    {0.0, -p, q, r, -s, r, q, -p, 0.0, 0.0},
                    {0.0, -p, -q, r, s, r, -q, -p, 0.0, 0.0},
                    {0.0, -a, -b, c, d, -e, d, c, -b, -a}};
        }
    }
    throw ConfigError("wavelet", "unknown wavelet family");
}

inline const WaveletFamily& wavelet(WaveletName name) {
    static const WaveletFamily tables[] = {
        make_wavelet(WaveletName::haar), make_wavelet(WaveletName::db4),
        make_wavelet(WaveletName::bior2_2), make_wavelet(WaveletName::bior4_4)};
    return tables[static_cast<int>(name)];
}

// Single level, periodized: out[k] = sum_i f[i] * x[(2k + 1 - i) mod n].
inline std::pair<std::vector<double>, std::vector<double>> dwt_single(
    const std::vector<double>& signal, const WaveletFamily& family) {
    const std::size_t n = signal.size();
    if (n % 2 != 0) throw ShapeError("wavelet", "dwt_single needs an even-length signal");
    if (n < 2) throw ShapeError("wavelet", "dwt_single needs at least two samples");
    const std::size_t half = n / 2;
    const std::size_t taps = family.length();
    std::vector<double> approx(half, 0.0), detail(half, 0.0);
    for (std::size_t k = 0; k < half; ++k) {
        double a = 0.0, d = 0.0;
        for (std::size_t i = 0; i < taps; ++i) {
            // (2k + 1 - i) mod n without signed arithmetic.
            const std::size_t idx = (2 * k + 1 + n * (taps / n + 1) - i) % n;
            a += family.dec_lo[i] * signal[idx];
            d += family.dec_hi[i] * signal[idx];
        }
        approx[k] = a;
        detail[k] = d;
    }
    return {std::move(approx), std::move(detail)};
}

// Synthesis mirrors the analysis indexing with the time-reversed rec filters,
// so for orthogonal families it is exactly the adjoint of dwt_single.
inline std::vector<double> idwt_single(const std::vector<double>& approx,
                                       const std::vector<double>& detail,
                                       const WaveletFamily& family) {
    if (approx.size() != detail.size()) {
        throw ShapeError("wavelet", "idwt_single needs equal-length approx and detail");
    }
    const std::size_t half = approx.size();
    const std::size_t n = 2 * half;
    const std::size_t taps = family.length();
    std::vector<double> out(n, 0.0);
    if (n == 0) return out;
    for (std::size_t k = 0; k < half; ++k) {
        for (std::size_t i = 0; i < taps; ++i) {
            const std::size_t idx = (2 * k + 1 + n * (taps / n + 1) - i) % n;
            out[idx] += family.rec_lo[taps - 1 - i] * approx[k] +
                        family.rec_hi[taps - 1 - i] * detail[k];
        }
    }
    return out;
}

struct DwtDecomposition {
    std::vector<double> approx;                // a^J
    std::vector<std::vector<double>> details;  // details[j-1] = d^j
    int level = 0;
    WaveletName family = WaveletName::haar;
    std::size_t original_len = 0;
    std::size_t pad = 0;  // edge-replicated samples appended before decomposition
};

inline int max_level(std::size_t len, const WaveletFamily& family) {
    if (len == 0) return 0;
    const double bound = std::log2(static_cast<double>(len)) -
                         std::log2(static_cast<double>(family.length())) + 1.0;
    return static_cast<int>(std::floor(bound + 1e-12));
}

inline DwtDecomposition wavedec(const std::vector<double>& signal, WaveletName name, int level) {
    const auto& family = wavelet(name);
    const std::size_t t = signal.size();
    if (level < 1) throw ConfigError("wavelet", "decomposition level must be >= 1");
    if (level > 30 || t % (std::size_t{1} << level) != 0) {
        throw ShapeError("wavelet", "signal length " + std::to_string(t) +
                                        " is not divisible by 2^" + std::to_string(level));
    }
    if (level > max_level(t, family)) {
        throw ConfigError("wavelet", "level " + std::to_string(level) + " too deep for " +
                                         std::string(to_string(name)) + " on length " +
                                         std::to_string(t));
    }
    DwtDecomposition dec;
    dec.level = level;
    dec.family = name;
    dec.original_len = t;
    std::vector<double> current = signal;
    for (int j = 1; j <= level; ++j) {
        auto [a, d] = dwt_single(current, family);
        dec.details.push_back(std::move(d));
        current = std::move(a);
    }
    dec.approx = std::move(current);
    return dec;
}

// Right-pads with the last sample up to the next multiple of 2^level, for
// depths the signal length does not divide.
inline DwtDecomposition wavedec_padded(const std::vector<double>& signal, WaveletName name,
                                       int level) {
    if (signal.empty()) throw ShapeError("wavelet", "empty signal");
    if (level < 1 || level > 30) throw ConfigError("wavelet", "decomposition level out of range");
    const std::size_t block = std::size_t{1} << level;
    const std::size_t padded = (signal.size() + block - 1) / block * block;
    std::vector<double> x = signal;
    x.resize(padded, signal.back());
    auto dec = wavedec(x, name, level);
    dec.original_len = signal.size();
    dec.pad = padded - signal.size();
    return dec;
}

inline std::vector<double> waverec(const DwtDecomposition& dec) {
    if (dec.level < 1 || dec.details.size() != static_cast<std::size_t>(dec.level)) {
        throw ShapeError("wavelet", "decomposition level does not match band count");
    }
    const std::size_t padded = dec.original_len + dec.pad;
    const std::size_t block = std::size_t{1} << dec.level;
    if (padded % block != 0 || dec.approx.size() != padded / block) {
        throw ShapeError("wavelet", "approximation band has inconsistent length");
    }
    for (int j = 1; j <= dec.level; ++j) {
        if (dec.details[static_cast<std::size_t>(j - 1)].size() != padded >> j) {
            throw ShapeError("wavelet", "detail band d" + std::to_string(j) +
                                            " has inconsistent length");
        }
    }
    const auto& family = wavelet(dec.family);
    std::vector<double> current = dec.approx;
    for (int j = dec.level; j >= 1; --j) {
        current = idwt_single(current, dec.details[static_cast<std::size_t>(j - 1)], family);
    }
    current.resize(dec.original_len);
    return current;
}

struct FrequencyRange {
    double lo = 0.0;
    double hi = 0.0;
};

// Nominal dyadic band: detail level j covers (fs/2^(j+1), fs/2^j], the
// approximation at level J covers [0, fs/2^(J+1)]. Pass j = 0 for the
// approximation band.
inline FrequencyRange band_frequency_range(int j, double fs_hz, int level) {
    if (!(fs_hz > 0.0)) throw ConfigError("wavelet", "fs_hz must be positive");
    if (j == 0) return {0.0, fs_hz / std::ldexp(1.0, level + 1)};
    return {fs_hz / std::ldexp(1.0, j + 1), fs_hz / std::ldexp(1.0, j)};
}

}  // namespace mmr

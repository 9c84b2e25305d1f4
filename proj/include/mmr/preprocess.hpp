#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mmr/error.hpp"
#include "mmr/synth.hpp"

namespace mmr {

struct BandpassSpec {
    double low_hz = 0.5;
    double high_hz = 10.0;
    int order = 4;  // analog prototype order; the bandpass has 2*order poles
    double ripple_db = 0.5;
};

struct SqiSpec {
    double entropy_max = 0.85;
    double autocorr_min = 0.3;
    std::pair<double, double> hr_lag_window_s{60.0 / 180.0, 60.0 / 40.0};
};

// Second-order section in transposed direct form II: b0 b1 b2 / 1 a1 a2.
struct Biquad {
    double b0, b1, b2;
    double a1, a2;
};

struct SosFilter {
    std::vector<Biquad> sections;
    double max_pole_radius = 0.0;
};

namespace dsp {

using cplx = std::complex<double>;

// Chebyshev type-I bandpass from the analog prototype via the bilinear
// transform with pre-warped band edges.
inline SosFilter design_cheby1_bandpass(const BandpassSpec& spec, double fs_hz) {
    if (spec.order < 2 || spec.order % 2 != 0) {
        throw ConfigError("preprocess", "bandpass order must be even and >= 2");
    }
    if (!(spec.ripple_db > 0.0)) throw ConfigError("preprocess", "ripple_db must be positive");
    if (!(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz && spec.high_hz < fs_hz / 2.0)) {
        throw ConfigError("preprocess", "bandpass requires 0 < low_hz < high_hz < fs/2");
    }
    const int n = spec.order;
    const double eps = std::sqrt(std::pow(10.0, spec.ripple_db / 10.0) - 1.0);
    const double mu = std::asinh(1.0 / eps) / n;

    std::vector<cplx> proto;
    for (int k = 1; k <= n; ++k) {
        const double theta = std::numbers::pi * (2.0 * k - 1.0) / (2.0 * n);
        proto.emplace_back(-std::sinh(mu) * std::sin(theta), std::cosh(mu) * std::cos(theta));
    }
    cplx gain = 1.0;
    for (const auto& p : proto) gain *= -p;
    double k_gain = gain.real() / std::sqrt(1.0 + eps * eps);  // even order: peak at ripple top

    const double fs2 = 2.0 * fs_hz;
    const double w1 = fs2 * std::tan(std::numbers::pi * spec.low_hz / fs_hz);
    const double w2 = fs2 * std::tan(std::numbers::pi * spec.high_hz / fs_hz);
    const double bw = w2 - w1;
    const double w0sq = w1 * w2;

    // Lowpass -> bandpass: each pole splits in two, n zeros land at s = 0.
    std::vector<cplx> poles;
    for (const auto& p : proto) {
        const cplx half = p * bw / 2.0;
        const cplx root = std::sqrt(half * half - w0sq);
        poles.push_back(half + root);
        poles.push_back(half - root);
    }
    k_gain *= std::pow(bw, n);

    // Bilinear: s = 0 -> z = 1; the n zeros at infinity -> z = -1.
    cplx denom = 1.0;
    std::vector<cplx> zpoles;
    for (const auto& p : poles) {
        zpoles.push_back((fs2 + p) / (fs2 - p));
        denom *= (fs2 - p);
    }
    const double k_digital = (k_gain * std::pow(fs2, n) / denom).real();

    SosFilter filt;
    for (const auto& p : zpoles) {
        filt.max_pole_radius = std::max(filt.max_pole_radius, std::abs(p));
    }
    if (filt.max_pole_radius >= 1.0) {
        throw DesignError("preprocess", "unstable bandpass design (pole radius " +
                                            std::to_string(filt.max_pole_radius) + ")");
    }
    // All poles are complex; keep one of each conjugate pair.
    std::vector<cplx> upper;
    for (const auto& p : zpoles) {
        if (p.imag() > 0.0) upper.push_back(p);
    }
    if (upper.size() != static_cast<std::size_t>(n)) {
        throw DesignError("preprocess", "unexpected real poles in bandpass design");
    }
    std::sort(upper.begin(), upper.end(),
              [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });
    for (std::size_t i = 0; i < upper.size(); ++i) {
        const double g = i == 0 ? k_digital : 1.0;
        // Each section carries one zero at +1 and one at -1: z^2 - 1.
        filt.sections.push_back({g, 0.0, -g, -2.0 * upper[i].real(), std::norm(upper[i])});
    }
    return filt;
}

inline cplx frequency_response(const SosFilter& filt, double f_hz, double fs_hz) {
    const cplx z1 = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs_hz);
    const cplx z2 = z1 * z1;
    cplx h = 1.0;
    for (const auto& s : filt.sections) {
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return h;
}

// Per-section state reached after an infinitely long unit step.
inline std::vector<std::array<double, 2>> step_steady_state(const SosFilter& filt) {
    std::vector<std::array<double, 2>> zi;
    double scale = 1.0;
    for (const auto& s : filt.sections) {
        const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        const double z2 = s.b2 - s.a2 * g;
        const double z1 = s.b1 - s.a1 * g + z2;
        zi.push_back({scale * z1, scale * z2});
        scale *= g;
    }
    return zi;
}

inline void sos_filter_inplace(const SosFilter& filt, std::vector<double>& x, double x0) {
    auto zi = step_steady_state(filt);
    for (std::size_t k = 0; k < filt.sections.size(); ++k) {
        const auto& s = filt.sections[k];
        double z1 = zi[k][0] * x0;
        double z2 = zi[k][1] * x0;
        for (auto& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

// Samples needed for the slowest pole to decay below 1e-12.
inline std::size_t settle_length(const SosFilter& filt) {
    return static_cast<std::size_t>(std::ceil(std::log(1e-12) / std::log(filt.max_pole_radius)));
}

// Forward-backward filtering. The signal is extended at each end by an odd
// reflection and then held constant, long enough for the filter transients to
// settle, and both passes start from the steady state of their first sample.
inline std::vector<double> filtfilt(const SosFilter& filt, const std::vector<double>& x,
                                    std::size_t min_pad) {
    const std::size_t n = x.size();
    const std::size_t pad = std::max(min_pad, settle_length(filt));
    const std::size_t refl = std::min(pad, n - 1);

    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) {
        const std::size_t k = std::min(pad - i, refl);  // distance from x[0]
        ext[i] = 2.0 * x.front() - x[k];
        ext[n + 2 * pad - 1 - i] = 2.0 * x.back() - x[n - 1 - k];
    }
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));

    sos_filter_inplace(filt, ext, ext.front());
    std::reverse(ext.begin(), ext.end());
    sos_filter_inplace(filt, ext, ext.front());
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

// Best rational approximation p/q of `ratio` with denominators up to `limit`.
inline std::pair<std::int64_t, std::int64_t> rational_ratio(double ratio, std::int64_t limit) {
    std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    double x = ratio;
    for (int iter = 0; iter < 64; ++iter) {
        const double a = std::floor(x);
        const auto ai = static_cast<std::int64_t>(a);
        const std::int64_t h2 = ai * h1 + h0;
        const std::int64_t k2 = ai * k1 + k0;
        if (h2 > limit || k2 > limit) break;
        h0 = h1, h1 = h2, k0 = k1, k1 = k2;
        if (std::abs(static_cast<double>(h1) / static_cast<double>(k1) - ratio) <=
            1e-9 * ratio) {
            return {h1, k1};
        }
        const double frac = x - a;
        if (frac < 1e-12) break;
        x = 1.0 / frac;
    }
    if (k1 != 0 && std::abs(static_cast<double>(h1) / static_cast<double>(k1) - ratio) <=
                       1e-9 * ratio) {
        return {h1, k1};
    }
    throw ConfigError("preprocess", "resampling ratio " + std::to_string(ratio) +
                                        " has no rational form with terms <= " +
                                        std::to_string(limit));
}

// Kaiser-windowed sinc low-pass with unit DC gain.
inline std::vector<double> kaiser_lowpass(std::size_t taps, double cutoff, double beta) {
    std::vector<double> h(taps);
    const double center = static_cast<double>(taps - 1) / 2.0;
    const double i0_beta = std::cyl_bessel_i(0.0, beta);
    double sum = 0.0;
    for (std::size_t k = 0; k < taps; ++k) {
        const double m = static_cast<double>(k) - center;
        const double arg = std::numbers::pi * cutoff * m;
        const double sinc = m == 0.0 ? 1.0 : std::sin(arg) / arg;
        const double r = m / center;
        const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) /
                         i0_beta;
        h[k] = cutoff * sinc * w;
        sum += h[k];
    }
    for (auto& v : h) v /= sum;
    return h;
}

}  // namespace dsp

inline std::vector<double> bandpass_zero_phase(const std::vector<double>& samples, double fs_hz,
                                               const BandpassSpec& spec) {
    const auto filt = dsp::design_cheby1_bandpass(spec, fs_hz);
    const auto min_pad = static_cast<std::size_t>(3 * spec.order);
    if (samples.size() <= min_pad) {
        throw ShapeError("preprocess", "bandpass needs more than 3*order samples");
    }
    return dsp::filtfilt(filt, samples, min_pad);
}

// Rational-rate resampling: upsample by p, Kaiser-windowed sinc low-pass at
// the lower Nyquist rate, downsample by q. Zero padding outside the signal.
inline std::vector<double> resample_polyphase(const std::vector<double>& samples, double fs_in_hz,
                                              double fs_out_hz) {
    if (!(fs_in_hz > 0.0 && fs_out_hz > 0.0)) {
        throw ConfigError("preprocess", "sampling rates must be positive");
    }
    auto [p, q] = dsp::rational_ratio(fs_out_hz / fs_in_hz, 1000);
    const std::int64_t g = std::gcd(p, q);
    p /= g;
    q /= g;
    if (p == 1 && q == 1) return samples;

    const std::int64_t n = static_cast<std::int64_t>(samples.size());
    const std::int64_t max_rate = std::max(p, q);
    const std::int64_t half_len = 10 * max_rate;
    auto h = dsp::kaiser_lowpass(static_cast<std::size_t>(2 * half_len + 1),
                                 1.0 / static_cast<double>(max_rate), 5.0);
    for (auto& v : h) v *= static_cast<double>(p);

    const auto n_out = static_cast<std::int64_t>(
        std::llround(static_cast<double>(n) * static_cast<double>(p) / static_cast<double>(q)));
    std::vector<double> out(static_cast<std::size_t>(n_out), 0.0);
    const std::int64_t taps = 2 * half_len + 1;
    for (std::int64_t j = 0; j < n_out; ++j) {
        // Upsampled index aligned with tap k is j*q + half_len - k; only
        // multiples of p carry input samples.
        const std::int64_t pos = j * q + half_len;
        std::int64_t k = pos % p;
        double acc = 0.0;
        for (; k < taps; k += p) {
            const std::int64_t idx = (pos - k) / p;
            if (idx < 0) break;
            if (idx < n) acc += h[static_cast<std::size_t>(k)] * samples[static_cast<std::size_t>(idx)];
        }
        out[static_cast<std::size_t>(j)] = acc;
    }
    return out;
}

// Population standard deviation.
inline std::vector<double> zscore(const std::vector<double>& samples) {
    if (samples.size() < 2) throw ContractError("preprocess", "zscore needs at least 2 samples");
    const double n = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (!(sd >= 1e-8)) throw DegenerateSegment("preprocess", "segment standard deviation below 1e-8");
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = (samples[i] - mean) / sd;
    return out;
}

struct SqiResult {
    bool passed = false;
    double entropy = 0.0;
    double autocorr_peak = 0.0;
};

namespace dsp {

// One-sided periodogram |X_k|^2, k = 0..n/2, by direct DFT.
inline std::vector<double> periodogram(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> cos_t(n), sin_t(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        cos_t[m] = std::cos(a);
        sin_t[m] = std::sin(a);
    }
    std::vector<double> psd(n / 2 + 1);
    for (std::size_t k = 0; k < psd.size(); ++k) {
        double re = 0.0, im = 0.0;
        std::size_t idx = 0;
        for (std::size_t i = 0; i < n; ++i) {
            re += x[i] * cos_t[idx];
            im -= x[i] * sin_t[idx];
            idx += k;
            if (idx >= n) idx -= n;
        }
        psd[k] = re * re + im * im;
    }
    return psd;
}

inline double normalized_spectral_entropy(const std::vector<double>& x) {
    const auto psd = periodogram(x);
    const double total = std::accumulate(psd.begin(), psd.end(), 0.0);
    if (!(total > 0.0)) return 1.0;
    double h = 0.0;
    for (double v : psd) {
        const double p = v / total;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(psd.size()));
}

inline double autocorrelation(const std::vector<double>& x, std::size_t lag) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        den += x[i] * x[i];
        if (i + lag < x.size()) num += x[i] * x[i + lag];
    }
    return den > 0.0 ? num / den : 0.0;
}

}  // namespace dsp

// Spectral-entropy and autocorrelation quality gate. The lag search starts at
// the shortest physiological beat period, so lag 0 never enters it.
inline SqiResult sqi_pass(const std::vector<double>& samples, double fs_hz, const SqiSpec& spec) {
    const auto [lag_lo_s, lag_hi_s] = spec.hr_lag_window_s;
    if (!(lag_lo_s > 0.0 && lag_hi_s > lag_lo_s)) {
        throw ConfigError("preprocess", "invalid SQI lag window");
    }
    if (static_cast<double>(samples.size()) < 2.0 * fs_hz * lag_hi_s) {
        throw ContractError("preprocess", "segment shorter than twice the maximum SQI lag");
    }
    SqiResult r;
    r.entropy = dsp::normalized_spectral_entropy(samples);
    const auto lag_lo = static_cast<std::size_t>(std::max(1.0, std::ceil(lag_lo_s * fs_hz)));
    const auto lag_hi = static_cast<std::size_t>(std::floor(lag_hi_s * fs_hz));
    r.autocorr_peak = -1.0;
    for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag) {
        r.autocorr_peak = std::max(r.autocorr_peak, dsp::autocorrelation(samples, lag));
    }
    r.passed = r.entropy <= spec.entropy_max && r.autocorr_peak >= spec.autocorr_min;
    return r;
}

struct Rejected {
    enum class Reason { degenerate, sqi };
    Reason reason;
    std::string detail;
};

inline const char* to_string(Rejected::Reason r) {
    return r == Rejected::Reason::degenerate ? "degenerate" : "sqi";
}

using PreprocessOutcome = std::variant<Segment, Rejected>;

// bandpass -> z-score -> resample -> SQI gate.
inline PreprocessOutcome preprocess_segment(const Segment& seg, double target_fs_hz,
                                            const BandpassSpec& bandpass, const SqiSpec& sqi) {
    std::vector<double> x;
    try {
        x = zscore(bandpass_zero_phase(seg.samples, seg.fs_hz, bandpass));
    } catch (const DegenerateSegment& e) {
        return Rejected{Rejected::Reason::degenerate, e.what()};
    }
    x = resample_polyphase(x, seg.fs_hz, target_fs_hz);
    const SqiResult q = sqi_pass(x, target_fs_hz, sqi);
    if (!q.passed) {
        return Rejected{Rejected::Reason::sqi, "entropy=" + std::to_string(q.entropy) +
                                                   " autocorr_peak=" +
                                                   std::to_string(q.autocorr_peak)};
    }
    Segment out = seg;
    out.fs_hz = target_fs_hz;
    out.samples = std::move(x);
    return out;
}

}  // namespace mmr

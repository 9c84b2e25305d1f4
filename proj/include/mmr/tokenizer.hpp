#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "mmr/coeffmap.hpp"
#include "mmr/error.hpp"
#include "mmr/rng.hpp"

namespace mmr {

// Non-overlapping r x c patches over a [C x T] map.
struct PatchGrid {
    std::size_t patch_rows = 1;
    std::size_t patch_cols = 25;
    std::size_t map_rows = 0;
    std::size_t map_cols = 0;

    static PatchGrid make(std::size_t map_rows, std::size_t map_cols, std::size_t patch_rows,
                          std::size_t patch_cols) {
        if (patch_rows == 0 || patch_cols == 0) throw ConfigError("tokenizer", "empty patch size");
        if (map_rows % patch_rows != 0 || map_cols % patch_cols != 0) {
            throw ShapeError("tokenizer", "map [" + std::to_string(map_rows) + " x " +
                                              std::to_string(map_cols) +
                                              "] is not divisible by patch (" +
                                              std::to_string(patch_rows) + "," +
                                              std::to_string(patch_cols) + ")");
        }
        return {patch_rows, patch_cols, map_rows, map_cols};
    }

    std::size_t grid_rows() const { return map_rows / patch_rows; }
    std::size_t grid_cols() const { return map_cols / patch_cols; }
    std::size_t n_patches() const { return grid_rows() * grid_cols(); }
    std::size_t patch_dim() const { return patch_rows * patch_cols; }
    std::size_t row_of(std::size_t p) const { return p / grid_cols(); }
    std::size_t col_of(std::size_t p) const { return p % grid_cols(); }
};

// Patches as a row-major [n_patches x patch_dim] buffer.
struct Patches {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> values;

    const double* patch(std::size_t p) const { return values.data() + p * dim; }
};

// Band-major traversal: every time patch of grid row 0, then grid row 1, ...
inline Patches patchify(const std::vector<std::vector<double>>& map, const PatchGrid& grid) {
    if (map.size() != grid.map_rows) throw ShapeError("tokenizer", "map row count mismatch");
    for (const auto& row : map) {
        if (row.size() != grid.map_cols) throw ShapeError("tokenizer", "ragged map rows");
    }
    Patches out{grid.n_patches(), grid.patch_dim(), {}};
    out.values.reserve(out.n * out.dim);
    for (std::size_t gr = 0; gr < grid.grid_rows(); ++gr) {
        for (std::size_t gc = 0; gc < grid.grid_cols(); ++gc) {
            for (std::size_t r = 0; r < grid.patch_rows; ++r) {
                const auto& row = map[gr * grid.patch_rows + r];
                const auto first = row.begin() + static_cast<std::ptrdiff_t>(gc * grid.patch_cols);
                out.values.insert(out.values.end(), first,
                                  first + static_cast<std::ptrdiff_t>(grid.patch_cols));
            }
        }
    }
    return out;
}

inline Patches patchify(const CoeffMap& map, const PatchGrid& grid) {
    return patchify(map.data, grid);
}

// Raw waveform as a single-row map, used by the time-domain baseline.
inline Patches patchify_raw(const std::vector<double>& samples, const PatchGrid& grid) {
    if (grid.map_rows != 1 || grid.patch_rows != 1) {
        throw ShapeError("tokenizer", "raw patching uses a 1 x T grid");
    }
    return patchify(std::vector<std::vector<double>>{samples}, grid);
}

inline std::vector<std::vector<double>> unpatchify(const Patches& patches, const PatchGrid& grid) {
    if (patches.n != grid.n_patches() || patches.dim != grid.patch_dim()) {
        throw ShapeError("tokenizer", "patch set does not match grid");
    }
    std::vector<std::vector<double>> map(grid.map_rows, std::vector<double>(grid.map_cols));
    for (std::size_t p = 0; p < patches.n; ++p) {
        const double* src = patches.patch(p);
        const std::size_t gr = grid.row_of(p), gc = grid.col_of(p);
        for (std::size_t r = 0; r < grid.patch_rows; ++r) {
            std::copy(src + r * grid.patch_cols, src + (r + 1) * grid.patch_cols,
                      map[gr * grid.patch_rows + r].begin() +
                          static_cast<std::ptrdiff_t>(gc * grid.patch_cols));
        }
    }
    return map;
}

enum class MaskStrategy { random, row_wise, cross_scale, frequency_guided };

inline std::string_view to_string(MaskStrategy s) {
    switch (s) {
        case MaskStrategy::random: return "random";
        case MaskStrategy::row_wise: return "row_wise";
        case MaskStrategy::cross_scale: return "cross_scale";
        case MaskStrategy::frequency_guided: return "frequency_guided";
    }
    return "?";
}

inline MaskStrategy mask_strategy_from_string(std::string_view s) {
    if (s == "random") return MaskStrategy::random;
    if (s == "row_wise") return MaskStrategy::row_wise;
    if (s == "cross_scale") return MaskStrategy::cross_scale;
    if (s == "frequency_guided") return MaskStrategy::frequency_guided;
    throw ConfigError("tokenizer", "unknown mask strategy '" + std::string(s) + "'");
}

struct MaskPlan {
    std::vector<std::size_t> masked;   // sorted
    std::vector<std::size_t> visible;  // sorted
    double target_ratio = 0.0;
    double ratio = 0.0;  // achieved |M| / |P|
    MaskStrategy strategy = MaskStrategy::random;
    std::uint64_t seed = 0;

    std::size_t n_patches() const { return masked.size() + visible.size(); }
};

namespace tokenizer_detail {

inline MaskPlan finish(std::vector<bool> is_masked, MaskStrategy strategy, double target,
                       std::uint64_t seed) {
    MaskPlan plan;
    plan.strategy = strategy;
    plan.target_ratio = target;
    plan.seed = seed;
    for (std::size_t p = 0; p < is_masked.size(); ++p) {
        (is_masked[p] ? plan.masked : plan.visible).push_back(p);
    }
    if (plan.masked.empty() || plan.visible.empty()) {
        throw ConfigError("tokenizer", "mask ratio leaves the masked or visible set empty");
    }
    plan.ratio = static_cast<double>(plan.masked.size()) / static_cast<double>(is_masked.size());
    return plan;
}

// Number of whole units (rows or columns) closest to the target, keeping at
// least one unit on each side.
inline std::size_t closest_unit_count(std::size_t units, double ratio) {
    if (units < 2) {
        throw ConfigError("tokenizer", "structured masking needs at least two grid rows/columns");
    }
    std::size_t best = 1;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < units; ++k) {
        const double err = std::abs(static_cast<double>(k) - ratio * static_cast<double>(units));
        if (err < best_err) {
            best = k;
            best_err = err;
        }
    }
    return best;
}

inline std::vector<std::size_t> pick(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    idx.resize(k);
    return idx;
}

}  // namespace tokenizer_detail

// band_meta holds one entry per map row; it may be empty for raw-waveform
// grids, where frequency-guided masking reduces to uniform sampling.
inline MaskPlan make_mask(std::size_t n_patches, const PatchGrid& grid,
                          const std::vector<BandMeta>& band_meta, MaskStrategy strategy,
                          double ratio, std::uint64_t seed) {
    using namespace tokenizer_detail;
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("tokenizer", "mask ratio must be in (0,1)");
    if (n_patches != grid.n_patches()) throw ShapeError("tokenizer", "patch count does not match grid");
    Rng rng(derive_seed(seed, "tokenizer.mask"));
    std::vector<bool> is_masked(n_patches, false);

    switch (strategy) {
        case MaskStrategy::random: {
            const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_patches)));
            if (k == 0 || k >= n_patches) {
                throw ConfigError("tokenizer", "mask ratio leaves the masked or visible set empty");
            }
            for (std::size_t p : pick(n_patches, k, rng)) is_masked[p] = true;
            break;
        }
        case MaskStrategy::row_wise: {
            const std::size_t k = closest_unit_count(grid.grid_rows(), ratio);
            for (std::size_t gr : pick(grid.grid_rows(), k, rng)) {
                for (std::size_t gc = 0; gc < grid.grid_cols(); ++gc) {
                    is_masked[gr * grid.grid_cols() + gc] = true;
                }
            }
            break;
        }
        case MaskStrategy::cross_scale: {
            const std::size_t k = closest_unit_count(grid.grid_cols(), ratio);
            for (std::size_t gc : pick(grid.grid_cols(), k, rng)) {
                for (std::size_t gr = 0; gr < grid.grid_rows(); ++gr) {
                    is_masked[gr * grid.grid_cols() + gc] = true;
                }
            }
            break;
        }
        case MaskStrategy::frequency_guided: {
            const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_patches)));
            if (k == 0 || k >= n_patches) {
                throw ConfigError("tokenizer", "mask ratio leaves the masked or visible set empty");
            }
            if (!band_meta.empty() && band_meta.size() != grid.map_rows) {
                throw ShapeError("tokenizer", "band metadata does not match map rows");
            }
            // Weighted sampling without replacement (Efraimidis-Spirakis):
            // keep the k largest log(u) / w, with w linear in band f_hi.
            std::vector<std::pair<double, std::size_t>> keys;
            for (std::size_t p = 0; p < n_patches; ++p) {
                double w = 1.0;
                if (!band_meta.empty()) {
                    w = 0.0;
                    const std::size_t gr = grid.row_of(p);
                    for (std::size_t r = 0; r < grid.patch_rows; ++r) {
                        w = std::max(w, band_meta[gr * grid.patch_rows + r].f_hi);
                    }
                }
                double u = rng.uniform();
                while (u <= 0.0) u = rng.uniform();
                keys.emplace_back(std::log(u) / w, p);
            }
            std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
                return a.first > b.first || (a.first == b.first && a.second < b.second);
            });
            for (std::size_t i = 0; i < k; ++i) is_masked[keys[i].second] = true;
            break;
        }
    }
    return finish(std::move(is_masked), strategy, ratio, seed);
}

// Fixed 2-D sine-cosine table: the first half of the channels encodes the
// time (grid column) index, the second half the band (grid row) index. Within
// each half, channel 2i is sin(pos * w_i) and 2i+1 is cos(pos * w_i) with
// w_i = 10000^(-2i / half).
struct PosEmbed {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> table;  // [n x dim]

    const double* row(std::size_t p) const { return table.data() + p * dim; }
};

inline PosEmbed pos_embed(const PatchGrid& grid, std::size_t d_model) {
    if (d_model == 0 || d_model % 4 != 0) {
        throw ConfigError("tokenizer", "positional embedding width must be divisible by 4");
    }
    const std::size_t half = d_model / 2;
    PosEmbed pe{grid.n_patches(), d_model, std::vector<double>(grid.n_patches() * d_model)};
    for (std::size_t p = 0; p < pe.n; ++p) {
        const double pos[2] = {static_cast<double>(grid.col_of(p)),
                               static_cast<double>(grid.row_of(p))};
        double* out = pe.table.data() + p * d_model;
        for (int part = 0; part < 2; ++part) {
            for (std::size_t i = 0; i < half / 2; ++i) {
                const double w = std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                                       static_cast<double>(half));
                out[part * half + 2 * i] = std::sin(pos[part] * w);
                out[part * half + 2 * i + 1] = std::cos(pos[part] * w);
            }
        }
    }
    return pe;
}

}  // namespace mmr

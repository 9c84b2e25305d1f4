#pragma once

#include <vector>

#include "mmr/coeffmap.hpp"
#include "mmr/model.hpp"
#include "mmr/tokenizer.hpp"
#include "mmr/wavelet.hpp"

namespace mmr {

// Everything between a preprocessed waveform and its patch sequence.
struct MapSpec {
    WaveletName family = WaveletName::haar;
    int level = 3;
    double cutoff_hz = 10.0;
    InterpMode interp = InterpMode::zero_order;
    NormMode norm = NormMode::per_band_instance;
    std::size_t patch_rows = 1;
    std::size_t patch_cols = 25;

    std::size_t patch_dim(ModelMode mode) const {
        return mode == ModelMode::mtr ? patch_cols : patch_rows * patch_cols;
    }
};

struct Tokens {
    Patches patches;
    PatchGrid grid;
    std::vector<BandMeta> band_meta;
};

// MMR: DWT -> coefficient map -> patches. MTR: the waveform itself as a
// single-row map. Signals whose length 2^level does not divide are
// edge-padded before the DWT.
inline Tokens tokenize(const std::vector<double>& samples, double fs_hz, const MapSpec& spec,
                       ModelMode mode) {
    Tokens out;
    if (mode == ModelMode::mtr) {
        out.grid = PatchGrid::make(1, samples.size(), 1, spec.patch_cols);
        out.patches = patchify_raw(samples, out.grid);
        return out;
    }
    const auto dec = wavedec_padded(samples, spec.family, spec.level);
    auto map = build_map(dec, fs_hz, spec.cutoff_hz, spec.interp, spec.norm);
    out.grid = PatchGrid::make(map.rows(), map.cols(), spec.patch_rows, spec.patch_cols);
    out.patches = patchify(map, out.grid);
    out.band_meta = std::move(map.band_meta);
    return out;
}

}  // namespace mmr

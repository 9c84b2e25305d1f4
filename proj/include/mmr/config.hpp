#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mmr/error.hpp"
#include "mmr/eval.hpp"
#include "mmr/model.hpp"
#include "mmr/pipeline.hpp"
#include "mmr/preprocess.hpp"
#include "mmr/synth.hpp"
#include "mmr/train.hpp"

namespace mmr {

using Json = nlohmann::json;

struct DataConfig {
    std::size_t n_users = 20;
    std::size_t segments_per_user = 10;
    CohortRanges cohort;
};

struct PreprocessConfig {
    double target_fs_hz = 100.0;
    BandpassSpec bandpass;
    SqiSpec sqi;
};

struct ArchSection {
    std::string preset = "mmr_light";  // mmr | mmr_light | custom
    ArchConfig arch = ArchConfig::mmr_light_preset();
};

struct EvalConfig {
    std::size_t folds = 5;
    ProbeSpec probe;
    std::size_t hist_bins = 20;
    std::vector<std::string> tasks{"class", "hr_bpm"};
};

// Grid for cmd_ablate; each axis is crossed with the others.
struct AblateGrid {
    std::vector<WaveletName> families{WaveletName::haar, WaveletName::db4};
    std::vector<int> levels{2, 3};
    std::vector<std::pair<std::size_t, std::size_t>> patches{{1, 25}};
    std::vector<MaskStrategy> masks{MaskStrategy::random};
    std::vector<InterpMode> interps{InterpMode::zero_order};
};

struct RunConfig {
    std::uint64_t seed = 0;
    DataConfig data;
    PreprocessConfig preprocess;
    MapSpec map;
    ArchSection arch;
    TrainConfig train;
    EvalConfig eval;
    AblateGrid ablate;
};

namespace config_detail {

// Reads fields of one JSON object; finish() rejects keys that were never read.
class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw SchemaError(label(), "expected an object");
    }

    // Call after reading every field.
    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (seen_.count(key) == 0) throw SchemaError(child(key), "unknown key");
        }
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string label() const { return path_.empty() ? "<root>" : path_; }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const Json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void number(const std::string& key, double& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number()) throw SchemaError(child(key), "expected a number");
        out = v.get<double>();
    }

    template <typename T>
    void integer(const std::string& key, T& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) throw SchemaError(child(key), "expected an integer");
        if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
            throw SchemaError(child(key), "expected a non-negative integer");
        }
        out = v.get<T>();
    }

    void string(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw SchemaError(child(key), "expected a string");
        out = v.get<std::string>();
    }

    // Parses an enum through `convert`, turning its ConfigError into a
    // schema error at this key.
    template <typename E, typename F>
    void enumeration(const std::string& key, E& out, F convert) {
        std::string s;
        string(key, s);
        if (s.empty()) return;
        out = convert_at(child(key), s, convert);
    }

    template <typename F>
    static auto convert_at(const std::string& path, const std::string& s, F convert) {
        try {
            return convert(s);
        } catch (const ConfigError&) {
            throw SchemaError(path, "unrecognized value \"" + s + "\"");
        }
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline Range parse_range(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw SchemaError(path, "expected [lo, hi]");
    }
    Range r{j[0].get<double>(), j[1].get<double>()};
    if (r.lo > r.hi) throw SchemaError(path, "lo exceeds hi");
    return r;
}

inline Json range_json(const Range& r) { return Json::array({r.lo, r.hi}); }

template <typename T, typename F>
std::vector<T> parse_list(const Json& j, const std::string& path, F each) {
    if (!j.is_array() || j.empty()) throw SchemaError(path, "expected a non-empty array");
    std::vector<T> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(each(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline void parse_data(const Json& j, DataConfig& d) {
    Reader r(j, "data");
    r.integer("n_users", d.n_users);
    r.integer("segments_per_user", d.segments_per_user);
    auto& c = d.cohort;
    if (r.has("hr_bpm")) {
        c.hr_bpm = parse_list<Range>(r.raw("hr_bpm"), "data.hr_bpm", parse_range);
    }
    r.number("hr_jitter_bpm", c.hr_jitter_bpm);
    if (r.has("n_harmonics")) {
        const auto h = parse_range(r.raw("n_harmonics"), "data.n_harmonics");
        if (h.lo != std::floor(h.lo) || h.hi != std::floor(h.hi)) {
            throw SchemaError("data.n_harmonics", "expected integers");
        }
        c.n_harmonics = {static_cast<int>(h.lo), static_cast<int>(h.hi)};
    }
    if (r.has("dicrotic_amp")) c.dicrotic_amp = parse_range(r.raw("dicrotic_amp"), "data.dicrotic_amp");
    if (r.has("wander_amp")) c.wander_amp = parse_range(r.raw("wander_amp"), "data.wander_amp");
    if (r.has("noise_std")) c.noise_std = parse_range(r.raw("noise_std"), "data.noise_std");
    r.number("fs_hz", c.fs_hz);
    r.number("duration_s", c.duration_s);
    r.finish();
}

inline void parse_preprocess(const Json& j, PreprocessConfig& p) {
    Reader r(j, "preprocess");
    r.number("target_fs_hz", p.target_fs_hz);
    r.number("low_hz", p.bandpass.low_hz);
    r.number("high_hz", p.bandpass.high_hz);
    r.integer("order", p.bandpass.order);
    r.number("ripple_db", p.bandpass.ripple_db);
    r.number("entropy_max", p.sqi.entropy_max);
    r.number("autocorr_min", p.sqi.autocorr_min);
    if (r.has("hr_lag_window_s")) {
        const auto w = parse_range(r.raw("hr_lag_window_s"), "preprocess.hr_lag_window_s");
        p.sqi.hr_lag_window_s = {w.lo, w.hi};
    }
    r.finish();
}

inline void parse_arch(const Json& j, ArchSection& a) {
    Reader r(j, "arch");
    r.string("preset", a.preset);
    if (a.preset == "mmr") {
        a.arch = ArchConfig::mmr_preset();
    } else if (a.preset == "mmr_light") {
        a.arch = ArchConfig::mmr_light_preset();
    } else if (a.preset != "custom") {
        throw SchemaError("arch.preset", "unrecognized value \"" + a.preset + "\"");
    }
    auto& c = a.arch;
    r.integer("enc_blocks", c.enc_blocks);
    r.integer("enc_dim", c.enc_dim);
    r.integer("enc_heads", c.enc_heads);
    r.integer("enc_ffn", c.enc_ffn);
    r.integer("dec_blocks", c.dec_blocks);
    r.integer("dec_dim", c.dec_dim);
    r.integer("dec_heads", c.dec_heads);
    r.integer("dec_ffn", c.dec_ffn);
    r.enumeration("mode", c.mode, model_mode_from_string);
    r.finish();
}

inline void parse_train(const Json& j, TrainConfig& t) {
    Reader r(j, "train");
    r.number("base_lr", t.base_lr);
    r.number("weight_decay", t.weight_decay);
    r.integer("batch_size", t.batch_size);
    r.integer("total_steps", t.total_steps);
    r.number("warmup_frac", t.warmup_frac);
    r.number("grad_clip_norm", t.grad_clip_norm);
    r.number("beta1", t.beta1);
    r.number("beta2", t.beta2);
    r.number("eps", t.eps);
    r.integer("log_every", t.log_every);
    if (r.has("aug")) {
        Reader a(r.raw("aug"), "train.aug");
        a.number("p_flip", t.aug.p_flip);
        a.number("noise_std", t.aug.noise_std);
        a.number("stretch_min", t.aug.stretch_min);
        a.number("stretch_max", t.aug.stretch_max);
        a.finish();
    }
    r.finish();
}

inline void parse_eval(const Json& j, EvalConfig& e) {
    Reader r(j, "eval");
    r.integer("folds", e.folds);
    r.integer("iterations", e.probe.iterations);
    r.number("lr", e.probe.lr);
    r.number("l2", e.probe.l2);
    r.number("ridge_lambda", e.probe.ridge_lambda);
    r.integer("hist_bins", e.hist_bins);
    if (r.has("tasks")) {
        e.tasks = parse_list<std::string>(r.raw("tasks"), "eval.tasks", [](const Json& v, const std::string& p) {
            if (v != "class" && v != "hr_bpm") throw SchemaError(p, "expected \"class\" or \"hr_bpm\"");
            return v.get<std::string>();
        });
    }
    r.finish();
}

inline void parse_ablate(const Json& j, AblateGrid& g) {
    Reader r(j, "ablate");
    auto strings = [](auto convert) {
        return [convert](const Json& v, const std::string& p) {
            if (!v.is_string()) throw SchemaError(p, "expected a string");
            return Reader::convert_at(p, v.get<std::string>(), convert);
        };
    };
    if (r.has("families")) {
        g.families = parse_list<WaveletName>(r.raw("families"), "ablate.families", strings(wavelet_from_string));
    }
    if (r.has("levels")) {
        g.levels = parse_list<int>(r.raw("levels"), "ablate.levels", [](const Json& v, const std::string& p) {
            if (!v.is_number_integer()) throw SchemaError(p, "expected an integer");
            return v.get<int>();
        });
    }
    if (r.has("patches")) {
        using Patch = std::pair<std::size_t, std::size_t>;
        g.patches = parse_list<Patch>(r.raw("patches"), "ablate.patches", [](const Json& v, const std::string& p) {
            if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned()) {
                throw SchemaError(p, "expected [rows, cols]");
            }
            return Patch{v[0].get<std::size_t>(), v[1].get<std::size_t>()};
        });
    }
    if (r.has("masks")) {
        g.masks = parse_list<MaskStrategy>(r.raw("masks"), "ablate.masks", strings(mask_strategy_from_string));
    }
    if (r.has("interps")) {
        g.interps = parse_list<InterpMode>(r.raw("interps"), "ablate.interps", strings(interp_from_string));
    }
    r.finish();
}

}  // namespace config_detail

// Strict parse: every key must be known, `seed` is mandatory. The tokenizer
// patch size determines arch.patch_dim.
inline RunConfig parse_config(const Json& j) {
    using namespace config_detail;
    RunConfig c;
    Reader r(j, "");
    if (!r.has("seed")) throw SchemaError("seed", "missing mandatory key");
    r.integer("seed", c.seed);
    if (r.has("data")) parse_data(r.raw("data"), c.data);
    if (r.has("preprocess")) parse_preprocess(r.raw("preprocess"), c.preprocess);
    if (r.has("wavelet")) {
        Reader w(r.raw("wavelet"), "wavelet");
        w.enumeration("family", c.map.family, wavelet_from_string);
        w.integer("level", c.map.level);
        w.finish();
    }
    if (r.has("map")) {
        Reader m(r.raw("map"), "map");
        m.number("cutoff_hz", c.map.cutoff_hz);
        m.enumeration("interp", c.map.interp, interp_from_string);
        m.enumeration("norm", c.map.norm, norm_from_string);
        m.finish();
    }
    if (r.has("tokenizer")) {
        Reader t(r.raw("tokenizer"), "tokenizer");
        t.integer("patch_rows", c.map.patch_rows);
        t.integer("patch_cols", c.map.patch_cols);
        t.number("mask_ratio", c.train.mask_ratio);
        t.enumeration("mask_strategy", c.train.mask_strategy, mask_strategy_from_string);
        t.finish();
    }
    if (r.has("arch")) parse_arch(r.raw("arch"), c.arch);
    if (r.has("train")) parse_train(r.raw("train"), c.train);
    if (r.has("eval")) parse_eval(r.raw("eval"), c.eval);
    if (r.has("ablate")) parse_ablate(r.raw("ablate"), c.ablate);
    r.finish();
    c.train.seed = c.seed;
    c.arch.arch.patch_dim = c.map.patch_dim(c.arch.arch.mode);
    return c;
}

inline RunConfig parse_config_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw SchemaError("<root>", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path);
    return parse_config_text(std::string(std::istreambuf_iterator<char>(in), {}));
}

// The fully resolved configuration; parse_config(to_json(c)) == c.
inline Json to_json(const RunConfig& c) {
    using config_detail::range_json;
    Json hr = Json::array();
    for (const auto& r : c.data.cohort.hr_bpm) hr.push_back(range_json(r));
    const auto& co = c.data.cohort;
    const auto& a = c.arch.arch;
    Json j;
    j["seed"] = c.seed;
    j["data"] = {{"n_users", c.data.n_users},
                 {"segments_per_user", c.data.segments_per_user},
                 {"hr_bpm", hr},
                 {"hr_jitter_bpm", co.hr_jitter_bpm},
                 {"n_harmonics", Json::array({co.n_harmonics.first, co.n_harmonics.second})},
                 {"dicrotic_amp", range_json(co.dicrotic_amp)},
                 {"wander_amp", range_json(co.wander_amp)},
                 {"noise_std", range_json(co.noise_std)},
                 {"fs_hz", co.fs_hz},
                 {"duration_s", co.duration_s}};
    const auto& p = c.preprocess;
    j["preprocess"] = {{"target_fs_hz", p.target_fs_hz},
                       {"low_hz", p.bandpass.low_hz},
                       {"high_hz", p.bandpass.high_hz},
                       {"order", p.bandpass.order},
                       {"ripple_db", p.bandpass.ripple_db},
                       {"entropy_max", p.sqi.entropy_max},
                       {"autocorr_min", p.sqi.autocorr_min},
                       {"hr_lag_window_s", Json::array({p.sqi.hr_lag_window_s.first, p.sqi.hr_lag_window_s.second})}};
    j["wavelet"] = {{"family", std::string(to_string(c.map.family))}, {"level", c.map.level}};
    j["map"] = {{"cutoff_hz", c.map.cutoff_hz},
                {"interp", std::string(to_string(c.map.interp))},
                {"norm", std::string(to_string(c.map.norm))}};
    j["tokenizer"] = {{"patch_rows", c.map.patch_rows},
                      {"patch_cols", c.map.patch_cols},
                      {"mask_ratio", c.train.mask_ratio},
                      {"mask_strategy", std::string(to_string(c.train.mask_strategy))}};
    j["arch"] = {{"preset", c.arch.preset},        {"mode", std::string(to_string(a.mode))},
                 {"enc_blocks", a.enc_blocks},     {"enc_dim", a.enc_dim},
                 {"enc_heads", a.enc_heads},       {"enc_ffn", a.enc_ffn},
                 {"dec_blocks", a.dec_blocks},     {"dec_dim", a.dec_dim},
                 {"dec_heads", a.dec_heads},       {"dec_ffn", a.dec_ffn}};
    const auto& t = c.train;
    j["train"] = {{"base_lr", t.base_lr},
                  {"weight_decay", t.weight_decay},
                  {"batch_size", t.batch_size},
                  {"total_steps", t.total_steps},
                  {"warmup_frac", t.warmup_frac},
                  {"grad_clip_norm", t.grad_clip_norm},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"eps", t.eps},
                  {"log_every", t.log_every},
                  {"aug",
                   {{"p_flip", t.aug.p_flip},
                    {"noise_std", t.aug.noise_std},
                    {"stretch_min", t.aug.stretch_min},
                    {"stretch_max", t.aug.stretch_max}}}};
    j["eval"] = {{"folds", c.eval.folds},
                 {"iterations", c.eval.probe.iterations},
                 {"lr", c.eval.probe.lr},
                 {"l2", c.eval.probe.l2},
                 {"ridge_lambda", c.eval.probe.ridge_lambda},
                 {"hist_bins", c.eval.hist_bins},
                 {"tasks", c.eval.tasks}};
    Json fams = Json::array(), masks = Json::array(), interps = Json::array(), patches = Json::array();
    for (auto f : c.ablate.families) fams.push_back(std::string(to_string(f)));
    for (auto m : c.ablate.masks) masks.push_back(std::string(to_string(m)));
    for (auto i : c.ablate.interps) interps.push_back(std::string(to_string(i)));
    for (auto [r, cc] : c.ablate.patches) patches.push_back(Json::array({r, cc}));
    j["ablate"] = {{"families", fams}, {"levels", c.ablate.levels}, {"patches", patches},
                   {"masks", masks},   {"interps", interps}};
    return j;
}

}  // namespace mmr

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "mmr/config.hpp"
#include "mmr/eval.hpp"
#include "mmr/io.hpp"
#include "mmr/pipeline.hpp"
#include "mmr/preprocess.hpp"
#include "mmr/synth.hpp"
#include "mmr/train.hpp"

namespace mmr {

namespace fs = std::filesystem;

struct CommandContext {
    bool quiet = false;
    std::size_t threads = 1;
    std::ostream* log = &std::cerr;

    void say(const std::string& msg) const {
        if (!quiet && log) *log << msg << '\n';
    }
};

namespace cmd_detail {

inline void prepare(const fs::path& out, const Json& config) {
    fs::create_directories(out);
    write_file((out / "config.json").string(), config.dump(2) + "\n");
}

inline void summary(const fs::path& out, const Json& s) {
    write_file((out / "summary.json").string(), s.dump(2) + "\n");
}

inline Json report_json(const ProbeReport& r) {
    Json folds = Json::array();
    for (double v : r.per_fold) folds.push_back(std::isnan(v) ? Json(nullptr) : Json(v));
    return {{"metric", to_string(r.metric)}, {"per_fold", folds}, {"mean", r.mean},
            {"min", r.min},                  {"max", r.max},      {"warnings", r.warnings}};
}

struct Labeled {
    Matrix features;
    std::vector<std::string> users;
    std::vector<std::string> segment_ids;
    std::map<std::string, std::vector<double>> labels;  // per label key, aligned with rows
};

// Joins embedding rows to segment labels by segment id.
inline Labeled join_labels(const std::vector<EmbeddingRow>& rows, const std::vector<Segment>& segs) {
    std::map<std::string, const Segment*> by_id;
    for (const auto& s : segs) by_id[s.segment_id] = &s;
    Labeled out;
    for (const auto& r : rows) {
        const auto it = by_id.find(r.segment_id);
        if (it == by_id.end()) throw SchemaError("labels", "no labels for segment " + r.segment_id);
        if (it->second->user_id != r.user_id) {
            throw SchemaError("labels", "user mismatch for segment " + r.segment_id);
        }
        out.features.push_back(r.values);
        out.users.push_back(r.user_id);
        out.segment_ids.push_back(r.segment_id);
        for (const auto& [k, v] : it->second->labels) out.labels[k].push_back(v);
    }
    for (const auto& [k, v] : out.labels) {
        if (v.size() != rows.size()) throw SchemaError("labels", "label " + k + " is missing on some segments");
    }
    return out;
}

struct ProbeResults {
    std::map<std::string, ProbeReport> reports;  // keyed "task.metric"
    Json summary;
};

inline ProbeResults run_probes(const Labeled& d, const EvalConfig& e, std::size_t threads) {
    const auto cls = d.labels.find("class");
    const std::vector<double> strat = cls != d.labels.end() ? cls->second : std::vector<double>(d.users.size(), 0.0);
    const auto plan = make_folds(d.users, strat, e.folds);
    ProbeSpec spec = e.probe;
    spec.threads = threads;
    ProbeResults res;
    res.summary["fold_warnings"] = plan.warnings;
    for (const auto& task : e.tasks) {
        const auto it = d.labels.find(task);
        if (it == d.labels.end()) throw SchemaError("eval.tasks", "no label \"" + task + "\" in data");
        std::vector<MetricKind> metrics;
        TaskKind kind = TaskKind::classification;
        if (task == "class") {
            metrics = {MetricKind::auroc, MetricKind::f1};
        } else {
            kind = TaskKind::regression;
            metrics = {MetricKind::mae};
        }
        for (auto m : metrics) {
            auto r = probe(d.features, it->second, d.users, kind, m, plan, spec);
            res.summary["probes"][task][to_string(m)] = report_json(r);
            res.reports[task + "." + to_string(m)] = std::move(r);
        }
    }
    return res;
}

inline void write_probe_csv(const fs::path& path, const std::map<std::string, ProbeReport>& reports) {
    std::ofstream out(path, std::ios::binary);
    out << "task,metric,fold,value\n";
    for (const auto& [key, r] : reports) {
        const auto task = key.substr(0, key.find('.'));
        for (std::size_t f = 0; f < r.per_fold.size(); ++f) {
            out << task << ',' << to_string(r.metric) << ',' << f << ','
                << (std::isnan(r.per_fold[f]) ? std::string("nan") : fmt_double(r.per_fold[f])) << '\n';
        }
    }
}

inline std::vector<EmbeddingRow> embed_all(const std::vector<Segment>& segs, const ModelState& state,
                                           const ArchConfig& arch, const MapSpec& spec) {
    std::vector<EmbeddingRow> rows;
    rows.reserve(segs.size());
    for (const auto& s : segs) rows.push_back({s.user_id, s.segment_id, embed_segment(s, state, arch, spec)});
    return rows;
}

}  // namespace cmd_detail

inline void cmd_synth(const RunConfig& cfg, const fs::path& out, const CommandContext& ctx = {}) {
    cmd_detail::prepare(out, to_json(cfg));
    const auto segs = generate_cohort(cfg.data.n_users, cfg.data.segments_per_user, cfg.data.cohort,
                                      derive_seed(cfg.seed, "data.cohort"));
    write_segments((out / "segments.jsonl").string(), segs);
    std::size_t positives = 0;
    for (const auto& s : segs) positives += s.labels.at("class") != 0.0;
    cmd_detail::summary(out, {{"segments", segs.size()}, {"users", cfg.data.n_users}, {"positives", positives}});
    ctx.say("synth: wrote " + std::to_string(segs.size()) + " segments");
}

inline void cmd_preprocess(const RunConfig& cfg, const fs::path& in, const fs::path& out,
                           const CommandContext& ctx = {}) {
    cmd_detail::prepare(out, to_json(cfg));
    const auto raw = read_segments(in.string());
    std::vector<Segment> kept;
    std::ofstream rejected(out / "rejected.csv", std::ios::binary);
    rejected << "segment_id,reason,detail\n";
    std::map<std::string, std::size_t> reasons;
    for (const auto& s : raw) {
        auto r = preprocess_segment(s, cfg.preprocess.target_fs_hz, cfg.preprocess.bandpass, cfg.preprocess.sqi);
        if (auto* seg = std::get_if<Segment>(&r)) {
            kept.push_back(std::move(*seg));
        } else {
            const auto& rej = std::get<Rejected>(r);
            ++reasons[to_string(rej.reason)];
            rejected << s.segment_id << ',' << to_string(rej.reason) << ",\"" << rej.detail << "\"\n";
        }
    }
    write_segments((out / "segments.jsonl").string(), kept);
    cmd_detail::summary(out, {{"input", raw.size()}, {"kept", kept.size()}, {"rejected", reasons}});
    ctx.say("preprocess: kept " + std::to_string(kept.size()) + " of " + std::to_string(raw.size()));
}

inline void cmd_pretrain(const RunConfig& cfg, const fs::path& data, const fs::path& out,
                         const CommandContext& ctx = {}) {
    const Json config = to_json(cfg);
    cmd_detail::prepare(out, config);
    const auto segs = read_segments(data.string());
    const auto res = pretrain(segs, cfg.arch.arch, cfg.map, cfg.train, [&](const LossRecord& r) {
        ctx.say("step " + std::to_string(r.step) + " lr " + fmt_double(r.lr) + " loss " + fmt_double(r.loss));
    });
    std::ofstream loss(out / "loss.csv", std::ios::binary);
    write_loss_csv(loss, res.curve);
    save_checkpoint((out / "checkpoint.mmrc").string(), {config.dump(), res.state, res.opt});
    cmd_detail::summary(out, {{"segments", segs.size()},
                              {"steps", cfg.train.total_steps},
                              {"parameters", res.state.count()},
                              {"first_loss", res.curve.empty() ? 0.0 : res.curve.front().loss},
                              {"final_loss", res.curve.empty() ? 0.0 : res.curve.back().loss},
                              {"attempted", res.attempted},
                              {"skipped", res.skipped}});
}

inline void cmd_embed(const fs::path& checkpoint, const fs::path& data, const fs::path& out,
                      const CommandContext& ctx = {}) {
    const auto ck = load_checkpoint(checkpoint.string());
    const auto cfg = parse_config_text(ck.config_json);
    cmd_detail::prepare(out, to_json(cfg));
    const auto segs = read_segments(data.string());
    const auto rows = cmd_detail::embed_all(segs, ck.state, cfg.arch.arch, cfg.map);
    write_embeddings_csv((out / "embeddings.csv").string(), rows);
    cmd_detail::summary(out, {{"segments", rows.size()}, {"dim", cfg.arch.arch.enc_dim}});
    ctx.say("embed: wrote " + std::to_string(rows.size()) + " embeddings");
}

inline void cmd_probe(const RunConfig& cfg, const fs::path& embeddings, const fs::path& labels,
                      const fs::path& out, const CommandContext& ctx = {}) {
    cmd_detail::prepare(out, to_json(cfg));
    const auto d = cmd_detail::join_labels(read_embeddings_csv(embeddings.string()), read_segments(labels.string()));
    auto res = cmd_detail::run_probes(d, cfg.eval, ctx.threads);
    cmd_detail::write_probe_csv(out / "probe.csv", res.reports);

    Json& s = res.summary;
    if (const auto hr = d.labels.find("hr_bpm"); hr != d.labels.end()) {
        Matrix pts;
        std::vector<int> groups;
        for (std::size_t i = 0; i < d.features.size(); ++i) {
            const int g = hr_group(hr->second[i]);
            if (g < 0) continue;
            pts.push_back(d.features[i]);
            groups.push_back(g);
        }
        try {
            const auto sil = silhouette(pts, groups);
            s["silhouette_hr"] = {{"score", sil.score}, {"points", sil.points}, {"warnings", sil.warnings}};
        } catch (const UndefinedMetric& e) {
            s["silhouette_hr"] = {{"score", nullptr}, {"warnings", {e.what()}}};
        }
    }
    const auto dist = pairwise_user_distances(d.features, d.users);
    s["user_distances"] = {{"pairs", dist.distances.size()}, {"mean", dist.mean}, {"sd", dist.sd},
                           {"min", dist.min},  {"median", dist.median},     {"max", dist.max}};
    {
        std::ofstream h(out / "distance_histogram.csv", std::ios::binary);
        h << "lo,hi,count\n";
        for (const auto& b : histogram(dist.distances, cfg.eval.hist_bins)) {
            h << fmt_double(b.lo) << ',' << fmt_double(b.hi) << ',' << b.count << '\n';
        }
    }
    if (d.features.size() >= 3 && d.features.front().size() >= 2) {
        const auto pca = pca2(d.features);
        std::ofstream p(out / "pca.csv", std::ios::binary);
        p << "user_id,segment_id,pc1,pc2\n";
        for (std::size_t i = 0; i < pca.coords.size(); ++i) {
            p << d.users[i] << ',' << d.segment_ids[i] << ',' << fmt_double(pca.coords[i][0]) << ','
              << fmt_double(pca.coords[i][1]) << '\n';
        }
        s["pca_variance"] = {pca.variance[0], pca.variance[1]};
    }
    cmd_detail::summary(out, s);
    for (const auto& [key, r] : res.reports) {
        ctx.say("probe " + key + ": mean " + fmt_double(r.mean) + " [" + fmt_double(r.min) + ", " +
                fmt_double(r.max) + "]");
    }
}

// Cartesian grid over family x level x patch x mask x interp. Combinations
// the tokenizer rejects are listed as skipped; the rest are pretrained,
// embedded and probed with the base configuration.
inline void cmd_ablate(const RunConfig& cfg, const fs::path& data, const fs::path& out,
                       const CommandContext& ctx = {}) {
    cmd_detail::prepare(out, to_json(cfg));
    const auto segs = read_segments(data.string());
    if (segs.empty()) throw ConfigError("ablate", "no segments in " + data.string());

    struct Row {
        std::string key;
        std::map<std::string, double> metrics;
    };
    std::vector<Row> rows;
    Json skipped = Json::array();
    for (auto family : cfg.ablate.families) {
        for (int level : cfg.ablate.levels) {
            for (auto [pr, pc] : cfg.ablate.patches) {
                for (auto mask : cfg.ablate.masks) {
                    for (auto interp : cfg.ablate.interps) {
                        RunConfig run = cfg;
                        run.map.family = family;
                        run.map.level = level;
                        run.map.patch_rows = pr;
                        run.map.patch_cols = pc;
                        run.map.interp = interp;
                        run.train.mask_strategy = mask;
                        run.arch.arch.patch_dim = run.map.patch_dim(run.arch.arch.mode);
                        const std::string key = std::string(to_string(family)) + ',' + std::to_string(level) +
                                                ',' + std::to_string(pr) + ',' + std::to_string(pc) + ',' +
                                                std::string(to_string(mask)) + ',' +
                                                std::string(to_string(interp));
                        try {
                            tokenize(segs.front().samples, segs.front().fs_hz, run.map, run.arch.arch.mode);
                            run.arch.arch.validate();
                        } catch (const DegenerateSegment&) {
                        } catch (const Error& e) {
                            skipped.push_back({{"combination", key}, {"reason", e.what()}});
                            continue;
                        }
                        ctx.say("ablate: " + key);
                        const auto res = pretrain(segs, run.arch.arch, run.map, run.train);
                        const auto emb = cmd_detail::embed_all(segs, res.state, run.arch.arch, run.map);
                        const auto probes =
                            cmd_detail::run_probes(cmd_detail::join_labels(emb, segs), run.eval, ctx.threads);
                        Row row{key, {}};
                        row.metrics["final_loss"] = res.curve.back().loss;
                        for (const auto& [k, r] : probes.reports) row.metrics[k] = r.mean;
                        rows.push_back(std::move(row));
                    }
                }
            }
        }
    }

    std::map<std::string, std::vector<std::pair<std::string, double>>> tables;
    for (const auto& r : rows)
        for (const auto& [metric, v] : r.metrics) tables[metric].push_back({r.key, v});
    Json files = Json::array();
    for (const auto& [metric, entries] : tables) {
        std::string stem = metric;
        std::replace(stem.begin(), stem.end(), '.', '_');
        const std::string name = "ablate_" + stem + ".csv";
        std::ofstream t(out / name, std::ios::binary);
        t << "family,level,patch_rows,patch_cols,mask,interp,value\n";
        for (const auto& [key, v] : entries) t << key << ',' << fmt_double(v) << '\n';
        files.push_back(name);
    }
    cmd_detail::summary(out, {{"combinations", rows.size()}, {"skipped", skipped}, {"tables", files}});
}

}  // namespace mmr

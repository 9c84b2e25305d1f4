#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "mmr/commands.hpp"

namespace {

mmr::RunConfig read_config(const std::string& path, std::optional<std::uint64_t> seed) {
    mmr::Json j;
    try {
        j = mmr::Json::parse(mmr::read_file(path));
    } catch (const mmr::Json::parse_error& e) {
        throw mmr::SchemaError("<root>", std::string("invalid JSON: ") + e.what());
    }
    if (seed) {
        if (!j.is_object()) throw mmr::SchemaError("<root>", "expected an object");
        j["seed"] = *seed;
    }
    return mmr::parse_config(j);
}

std::size_t threads_from_env() {
    const char* v = std::getenv("MMR_THREADS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw mmr::ConfigError("cli", std::string("MMR_THREADS must be a positive integer, got '") + v + "'");
    return static_cast<std::size_t>(n);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Masked multiscale reconstruction pipeline for PPG-like signals"};
    app.require_subcommand(1);

    std::string config, out, in, data, checkpoint, embeddings, labels;
    std::optional<std::uint64_t> seed;
    bool quiet = false;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config, "Run configuration (JSON)")->check(CLI::ExistingFile);
        if (needs_config) c->required();
        sub->add_option("--out", out, "Output directory")->required();
        sub->add_option("--seed", seed, "Override the configuration seed");
        sub->add_flag("--quiet", quiet, "Suppress progress output");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort as JSON lines");
    common(synth, true);

    auto* prep = app.add_subcommand("preprocess", "Bandpass, normalize, resample and quality-gate segments");
    common(prep, true);
    prep->add_option("--in", in, "Raw segments (JSONL)")->required()->check(CLI::ExistingFile);

    auto* pre = app.add_subcommand("pretrain", "Masked-reconstruction pretraining");
    common(pre, true);
    pre->add_option("--data", data, "Preprocessed segments (JSONL)")->required()->check(CLI::ExistingFile);

    auto* emb = app.add_subcommand("embed", "Frozen-encoder embeddings for every segment");
    common(emb, false);
    emb->add_option("--checkpoint", checkpoint, "Checkpoint from pretrain")->required()->check(CLI::ExistingFile);
    emb->add_option("--data", data, "Preprocessed segments (JSONL)")->required()->check(CLI::ExistingFile);

    auto* prb = app.add_subcommand("probe", "Grouped cross-validated linear probes and embedding analysis");
    common(prb, true);
    prb->add_option("--embeddings", embeddings, "Embeddings CSV from embed")->required()->check(CLI::ExistingFile);
    prb->add_option("--labels", labels, "Segments carrying labels (JSONL)")->required()->check(CLI::ExistingFile);

    auto* abl = app.add_subcommand("ablate", "Pretrain and probe over a configuration grid");
    common(abl, true);
    abl->add_option("--data", data, "Preprocessed segments (JSONL)")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        mmr::CommandContext ctx;
        ctx.quiet = quiet;
        ctx.threads = threads_from_env();
        if (synth->parsed()) {
            mmr::cmd_synth(read_config(config, seed), out, ctx);
        } else if (prep->parsed()) {
            mmr::cmd_preprocess(read_config(config, seed), in, out, ctx);
        } else if (pre->parsed()) {
            mmr::cmd_pretrain(read_config(config, seed), data, out, ctx);
        } else if (emb->parsed()) {
            mmr::cmd_embed(checkpoint, data, out, ctx);
        } else if (prb->parsed()) {
            mmr::cmd_probe(read_config(config, seed), embeddings, labels, out, ctx);
        } else if (abl->parsed()) {
            mmr::cmd_ablate(read_config(config, seed), data, out, ctx);
        }
    } catch (const mmr::SchemaError& e) {
        std::cerr << "error: schema violation at " << e.path() << ": " << e.what() << '\n';
        return 2;
    } catch (const mmr::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

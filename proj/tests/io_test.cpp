#include <gtest/gtest.h>

#include <filesystem>

#include "mmr/config.hpp"
#include "mmr/io.hpp"

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("mmr_io_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

mmr::ModelState small_state() {
    mmr::ArchConfig a;
    a.enc_blocks = a.dec_blocks = 1;
    a.enc_dim = a.dec_dim = 8;
    a.enc_heads = a.dec_heads = 2;
    return mmr::init_model(a, 4);
}

std::string schema_path(const std::string& text) {
    try {
        mmr::parse_config_text(text);
    } catch (const mmr::SchemaError& e) {
        return e.path();
    }
    return "<accepted>";
}

}  // namespace

TEST(Segments, JsonlRoundTripIsExact) {
    const auto dir = scratch("jsonl");
    auto segs = mmr::generate_cohort(2, 2, mmr::CohortRanges{}, 5);
    segs[0].samples[3] = 0.1 + 0.2;  // not representable in short decimal
    mmr::write_segments((dir / "s.jsonl").string(), segs);
    const auto back = mmr::read_segments((dir / "s.jsonl").string());
    ASSERT_EQ(back.size(), segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
        EXPECT_EQ(back[i].user_id, segs[i].user_id);
        EXPECT_EQ(back[i].segment_id, segs[i].segment_id);
        EXPECT_EQ(back[i].fs_hz, segs[i].fs_hz);
        EXPECT_EQ(back[i].samples, segs[i].samples);
        EXPECT_EQ(back[i].labels, segs[i].labels);
    }
}

TEST(Segments, EveryLineParsesAlone) {
    const auto segs = mmr::generate_cohort(1, 3, mmr::CohortRanges{}, 6);
    for (const auto& s : segs) {
        const auto line = mmr::segment_to_json(s).dump();
        EXPECT_EQ(line.find('\n'), std::string::npos);
        EXPECT_EQ(mmr::segment_from_json(nlohmann::json::parse(line), "x").samples, s.samples);
    }
}

TEST(Segments, SchemaErrorsNameTheField) {
    const auto bad = nlohmann::json::parse(R"({"user_id":"u","segment_id":"s","fs_hz":100,"samples":[1,"x"]})");
    try {
        mmr::segment_from_json(bad, "line 4");
        FAIL();
    } catch (const mmr::SchemaError& e) {
        EXPECT_EQ(e.path(), "line 4.samples[1]");
    }
    const auto extra = nlohmann::json::parse(R"({"user_id":"u","segment_id":"s","fs_hz":100,"samples":[],"x":1})");
    EXPECT_THROW(mmr::segment_from_json(extra, "l"), mmr::SchemaError);
    const auto missing = nlohmann::json::parse(R"({"user_id":"u","fs_hz":100,"samples":[]})");
    EXPECT_THROW(mmr::segment_from_json(missing, "l"), mmr::SchemaError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto state = small_state();
    auto opt = mmr::AdamState::zeros_like(state);
    opt.m[0][0] = 1.0 / 3.0;
    opt.v[1][2] = 1e-300;
    opt.step = 42;
    const mmr::Checkpoint ck{R"({"seed":1})", state, opt};
    const auto bytes = mmr::serialize_checkpoint(ck);
    const auto back = mmr::deserialize_checkpoint(bytes);
    EXPECT_EQ(back.config_json, ck.config_json);
    ASSERT_EQ(back.state.params().size(), state.params().size());
    for (std::size_t k = 0; k < state.params().size(); ++k) {
        EXPECT_EQ(back.state.params()[k].first, state.params()[k].first);
        EXPECT_EQ(back.state.params()[k].second.shape(), state.params()[k].second.shape());
        EXPECT_EQ(back.state.params()[k].second.values(), state.params()[k].second.values());
    }
    EXPECT_EQ(back.opt.m, opt.m);
    EXPECT_EQ(back.opt.v, opt.v);
    EXPECT_EQ(back.opt.step, 42u);
    EXPECT_EQ(mmr::serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, LayoutIsLittleEndian) {
    mmr::ModelState s;
    s.add("w", mmr::Tensor({2}, {1.0, -2.0}, true));
    const auto b = mmr::serialize_checkpoint({"{}", s, {}});
    // magic, version 1, blob "{}", one tensor "w", rank 1, dim 2, two doubles.
    const std::string expect_head = std::string("MMRC") + std::string("\x01\x00\x00\x00", 4) +
                                    std::string("\x02\x00\x00\x00", 4) + "{}" + std::string("\x01\x00\x00\x00", 4) +
                                    std::string("\x01\x00\x00\x00", 4) + "w" + std::string("\x01\x00\x00\x00", 4) +
                                    std::string("\x02\x00\x00\x00\x00\x00\x00\x00", 8);
    ASSERT_EQ(b.size(), expect_head.size() + 16);
    EXPECT_EQ(b.substr(0, expect_head.size()), expect_head);
    // 1.0 = 0x3FF0000000000000
    EXPECT_EQ(b.substr(expect_head.size(), 8), std::string("\x00\x00\x00\x00\x00\x00\xf0\x3f", 8));
}

TEST(Checkpoint, RejectsBadMagicVersionAndTruncation) {
    const auto good = mmr::serialize_checkpoint({"{}", small_state(), {}});
    auto bad = good;
    bad[0] = 'X';
    EXPECT_THROW(mmr::deserialize_checkpoint(bad), mmr::SchemaError);
    bad = good;
    bad[4] = 2;
    EXPECT_THROW(mmr::deserialize_checkpoint(bad), mmr::SchemaError);
    EXPECT_THROW(mmr::deserialize_checkpoint(good.substr(0, good.size() - 3)), mmr::SchemaError);
    EXPECT_THROW(mmr::deserialize_checkpoint(good + "x"), mmr::SchemaError);
}

TEST(Checkpoint, FileRoundTrip) {
    const auto dir = scratch("ckpt");
    const mmr::Checkpoint ck{"{}", small_state(), {}};
    mmr::save_checkpoint((dir / "c.mmrc").string(), ck);
    EXPECT_EQ(mmr::read_file((dir / "c.mmrc").string()), mmr::serialize_checkpoint(ck));
    EXPECT_TRUE(mmr::load_checkpoint((dir / "c.mmrc").string()).opt.m.empty());
}

TEST(Csv, DoublesReadBackExactly) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 0.0}) {
        EXPECT_EQ(std::strtod(mmr::fmt_double(v).c_str(), nullptr), v);
    }
    EXPECT_EQ(mmr::fmt_double(0.5), "0.5");
}

TEST(Csv, EmbeddingsRoundTrip) {
    const auto dir = scratch("emb");
    const std::vector<mmr::EmbeddingRow> rows{{"u1", "s1", {0.1, 0.2, 1.0 / 7.0}}, {"u2", "s2", {-1, 0, 1e-9}}};
    mmr::write_embeddings_csv((dir / "e.csv").string(), rows);
    const auto back = mmr::read_embeddings_csv((dir / "e.csv").string());
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].values, rows[0].values);
    EXPECT_EQ(back[1].segment_id, "s2");
    EXPECT_EQ(mmr::read_file((dir / "e.csv").string()).substr(0, 30), "user_id,segment_id,e0,e1,e2\nu1");
}

TEST(Config, DefaultsNeedOnlySeed) {
    const auto c = mmr::parse_config_text(R"({"seed": 7})");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.train.seed, 7u);
    EXPECT_EQ(c.arch.arch.enc_dim, 192u);
    EXPECT_EQ(c.arch.arch.patch_dim, 25u);
    EXPECT_EQ(c.map.level, 3);
}

TEST(Config, SeedIsMandatory) { EXPECT_EQ(schema_path("{}"), "seed"); }

TEST(Config, UnknownKeysAreRejectedWithPath) {
    EXPECT_EQ(schema_path(R"({"seed":1,"tarin":{}})"), "tarin");
    EXPECT_EQ(schema_path(R"({"seed":1,"train":{"base_lr":1e-3,"lr":1}})"), "train.lr");
    EXPECT_EQ(schema_path(R"({"seed":1,"train":{"aug":{"flip":1}}})"), "train.aug.flip");
    EXPECT_EQ(schema_path(R"({"seed":1,"wavelet":{"famly":"haar"}})"), "wavelet.famly");
}

TEST(Config, TypeAndValueErrorsHavePaths) {
    EXPECT_EQ(schema_path(R"({"seed":1,"train":{"batch_size":"8"}})"), "train.batch_size");
    EXPECT_EQ(schema_path(R"({"seed":1,"train":{"batch_size":-8}})"), "train.batch_size");
    EXPECT_EQ(schema_path(R"({"seed":1,"wavelet":{"family":"sym5"}})"), "wavelet.family");
    EXPECT_EQ(schema_path(R"({"seed":1,"ablate":{"masks":["random","blocky"]}})"), "ablate.masks[1]");
    EXPECT_EQ(schema_path(R"({"seed":1,"data":{"hr_bpm":[[70,60]]}})"), "data.hr_bpm[0]");
    EXPECT_EQ(schema_path(R"({"seed":1,)"), "<root>");
}

TEST(Config, ResolvedEchoReparsesIdentically) {
    const auto c = mmr::parse_config_text(R"({
        "seed": 3,
        "wavelet": {"family": "bior2.2", "level": 4},
        "tokenizer": {"patch_rows": 2, "patch_cols": 25, "mask_strategy": "cross_scale"},
        "arch": {"preset": "custom", "enc_blocks": 1, "enc_dim": 16, "enc_heads": 2, "dec_blocks": 1,
                 "dec_dim": 8, "dec_heads": 1, "mode": "mmr"},
        "train": {"total_steps": 3, "aug": {"p_flip": 0.0}},
        "ablate": {"patches": [[1, 25], [2, 50]]}
    })");
    EXPECT_EQ(c.arch.arch.patch_dim, 50u);
    const auto echo = mmr::to_json(c);
    EXPECT_EQ(mmr::to_json(mmr::parse_config(echo)), echo);
}

TEST(Config, PresetsSelectArchitectures) {
    EXPECT_EQ(mmr::parse_config_text(R"({"seed":1,"arch":{"preset":"mmr"}})").arch.arch.enc_dim, 256u);
    EXPECT_EQ(schema_path(R"({"seed":1,"arch":{"preset":"huge"}})"), "arch.preset");
    const auto mtr = mmr::parse_config_text(R"({"seed":1,"arch":{"mode":"mtr"},"tokenizer":{"patch_cols":50}})");
    EXPECT_EQ(mtr.arch.arch.patch_dim, 50u);
}

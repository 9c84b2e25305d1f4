#pragma once

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mmr/error.hpp"
#include "mmr/model.hpp"
#include "mmr/synth.hpp"
#include "mmr/train.hpp"

namespace mmr {

// ---------------------------------------------------------------- segments

inline nlohmann::json segment_to_json(const Segment& s) {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [k, v] : s.labels) labels[k] = v;
    return {{"user_id", s.user_id},
            {"segment_id", s.segment_id},
            {"fs_hz", s.fs_hz},
            {"samples", s.samples},
            {"labels", labels}};
}

inline Segment segment_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw SchemaError(where, "expected an object");
    for (const auto& [key, value] : j.items()) {
        if (key != "user_id" && key != "segment_id" && key != "fs_hz" && key != "samples" && key != "labels") {
            throw SchemaError(where + "." + key, "unknown key");
        }
    }
    auto need = [&](const char* key) -> const nlohmann::json& {
        if (!j.contains(key)) throw SchemaError(where + "." + key, "missing key");
        return j.at(key);
    };
    Segment s;
    const auto& uid = need("user_id");
    const auto& sid = need("segment_id");
    const auto& fs = need("fs_hz");
    const auto& samples = need("samples");
    if (!uid.is_string()) throw SchemaError(where + ".user_id", "expected a string");
    if (!sid.is_string()) throw SchemaError(where + ".segment_id", "expected a string");
    if (!fs.is_number()) throw SchemaError(where + ".fs_hz", "expected a number");
    if (!samples.is_array()) throw SchemaError(where + ".samples", "expected an array");
    s.user_id = uid.get<std::string>();
    s.segment_id = sid.get<std::string>();
    s.fs_hz = fs.get<double>();
    s.samples.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!samples[i].is_number()) {
            throw SchemaError(where + ".samples[" + std::to_string(i) + "]", "expected a number");
        }
        s.samples.push_back(samples[i].get<double>());
    }
    if (j.contains("labels")) {
        const auto& l = j.at("labels");
        if (!l.is_object()) throw SchemaError(where + ".labels", "expected an object");
        for (const auto& [k, v] : l.items()) {
            if (!v.is_number()) throw SchemaError(where + ".labels." + k, "expected a number");
            s.labels[k] = v.get<double>();
        }
    }
    return s;
}

inline void write_segments(const std::string& path, const std::vector<Segment>& segs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("io", "cannot write " + path);
    for (const auto& s : segs) out << segment_to_json(s).dump() << '\n';
}

// One JSON object per line; blank lines are ignored.
inline std::vector<Segment> read_segments(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("io", "cannot open " + path);
    std::vector<Segment> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(n);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(where, std::string("invalid JSON: ") + e.what());
        }
        out.push_back(segment_from_json(j, where));
    }
    return out;
}

// ---------------------------------------------------------------- checkpoints

inline constexpr char kCheckpointMagic[4] = {'M', 'M', 'R', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace io_detail {

template <typename T>
void put_le(std::string& out, T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_same_v<T, double>) {
        bits = std::bit_cast<std::uint64_t>(value);
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline void put_string(std::string& out, const std::string& s) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Cursor {
public:
    explicit Cursor(const std::string& data) : data_(data) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        if constexpr (std::is_same_v<T, double>) {
            return std::bit_cast<double>(bits);
        } else {
            return static_cast<T>(bits);
        }
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string string() { return bytes(get<std::uint32_t>()); }

    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw SchemaError("checkpoint", "truncated file");
    }

    const std::string& data_;
    std::size_t pos_ = 0;
};

}  // namespace io_detail

struct Checkpoint {
    std::string config_json;  // the run configuration that produced the weights
    ModelState state;
    AdamState opt;  // empty when saved without optimizer state
};

// Layout: magic, u32 version, config blob, u32 tensor count, then per tensor
// name, u32 rank, u64 dims, f64 data; all little-endian. Optimizer moments,
// when present, ride along as tensors named "opt.m.*" / "opt.v.*" plus a
// one-element "opt.step".
inline std::string serialize_checkpoint(const Checkpoint& ck) {
    using namespace io_detail;
    std::vector<std::pair<std::string, std::pair<Shape, const std::vector<double>*>>> items;
    for (const auto& [name, t] : ck.state.params()) items.push_back({name, {t.shape(), &t.values()}});
    const std::vector<double> step{static_cast<double>(ck.opt.step)};
    if (!ck.opt.m.empty()) {
        const auto& params = ck.state.params();
        if (ck.opt.m.size() != params.size()) throw ShapeError("io", "optimizer state does not match model");
        for (std::size_t k = 0; k < params.size(); ++k) {
            items.push_back({"opt.m." + params[k].first, {params[k].second.shape(), &ck.opt.m[k]}});
        }
        for (std::size_t k = 0; k < params.size(); ++k) {
            items.push_back({"opt.v." + params[k].first, {params[k].second.shape(), &ck.opt.v[k]}});
        }
        items.push_back({"opt.step", {{1}, &step}});
    }
    std::string out(kCheckpointMagic, 4);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_string(out, ck.config_json);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(items.size()));
    for (const auto& [name, payload] : items) {
        const auto& [shape, values] = payload;
        put_string(out, name);
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) put_le<std::uint64_t>(out, d);
        for (double v : *values) put_le<double>(out, v);
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& data) {
    io_detail::Cursor in(data);
    if (in.bytes(4) != std::string(kCheckpointMagic, 4)) throw SchemaError("checkpoint", "bad magic");
    const auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw SchemaError("checkpoint", "unsupported version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.config_json = in.string();
    const auto count = in.get<std::uint32_t>();
    std::map<std::string, std::vector<double>> moments;
    bool has_step = false;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = in.string();
        const auto rank = in.get<std::uint32_t>();
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
        std::vector<double> values(numel(shape));
        for (auto& v : values) v = in.get<double>();
        if (name == "opt.step") {
            ck.opt.step = static_cast<std::size_t>(values.at(0));
            has_step = true;
        } else if (name.rfind("opt.", 0) == 0) {
            moments[name] = std::move(values);
        } else {
            ck.state.add(std::move(name), Tensor(std::move(shape), std::move(values), true));
        }
    }
    if (!in.done()) throw SchemaError("checkpoint", "trailing bytes");
    if (has_step) {
        for (const auto& [name, t] : ck.state.params()) {
            auto m = moments.find("opt.m." + name), v = moments.find("opt.v." + name);
            if (m == moments.end() || v == moments.end()) {
                throw SchemaError("checkpoint", "optimizer state missing for " + name);
            }
            ck.opt.m.push_back(std::move(m->second));
            ck.opt.v.push_back(std::move(v->second));
        }
    }
    return ck;
}

inline void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("io", "cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("io", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

// ---------------------------------------------------------------- csv

// Shortest text that reads back to the same double.
inline std::string fmt_double(double v) {
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

struct EmbeddingRow {
    std::string user_id;
    std::string segment_id;
    std::vector<double> values;
};

inline void write_embeddings_csv(const std::string& path, const std::vector<EmbeddingRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("io", "cannot write " + path);
    out << "user_id,segment_id";
    const std::size_t d = rows.empty() ? 0 : rows.front().values.size();
    for (std::size_t j = 0; j < d; ++j) out << ",e" << j;
    out << '\n';
    for (const auto& r : rows) {
        out << r.user_id << ',' << r.segment_id;
        for (double v : r.values) out << ',' << fmt_double(v);
        out << '\n';
    }
}

inline std::vector<EmbeddingRow> read_embeddings_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("io", "cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("user_id,segment_id", 0) != 0) {
        throw SchemaError(path, "missing embeddings header");
    }
    const auto width = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
    std::vector<EmbeddingRow> rows;
    for (std::size_t n = 2; std::getline(in, line); ++n) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        EmbeddingRow r;
        std::getline(ss, r.user_id, ',');
        std::getline(ss, r.segment_id, ',');
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || *end != '\0') {
                throw SchemaError(path + ":" + std::to_string(n), "bad number '" + cell + "'");
            }
            r.values.push_back(v);
        }
        if (r.values.size() != width) throw SchemaError(path + ":" + std::to_string(n), "wrong column count");
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace mmr

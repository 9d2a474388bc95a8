#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "pinn/config.hpp"
#include "pinn/training.hpp"

// Parameter checkpoints and run histories.
//
// Checkpoint layout, all integers little-endian (host order; this format is
// not an interchange format):
//   8 bytes   magic "PINNCKP1"
//   u32       header length H
//   H bytes   JSON header: model config + array directory
//   payload   the arrays' doubles, back to back, in directory order
//   u32       crc32 of everything before it
// Any inconsistency loads as CheckpointError, never as garbage parameters.

namespace pinn {

struct Checkpoint {
    ModelConfig model;
    std::vector<std::pair<std::string, Eigen::VectorXd>> arrays;

    const Eigen::VectorXd& array(const std::string& name) const {
        for (const auto& [n, v] : arrays)
            if (n == name) return v;
        throw CheckpointError("checkpoint has no array '" + name + "'");
    }
};

namespace detail {

constexpr char kCkptMagic[8] = {'P', 'I', 'N', 'N', 'C', 'K', 'P', '1'};

inline void append_u32(std::string& s, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    s.append(b, 4);
}

inline std::uint32_t read_u32(const std::string& s, std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, s.data() + off, 4);
    return v;
}

inline std::uint32_t crc_of(const std::string& s, std::size_t len) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(len)));
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

}  // namespace detail

inline std::string encode_checkpoint(
    const ModelConfig& model, const std::vector<std::pair<std::string, Eigen::VectorXd>>& arrays) {
    Json dir = Json::array();
    for (const auto& [name, vec] : arrays)
        dir.push_back(Json{{"name", name}, {"len", vec.size()}});
    const std::string header = Json{{"model", to_json(model)}, {"arrays", dir}}.dump();

    std::string out(detail::kCkptMagic, 8);
    detail::append_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    for (const auto& [name, vec] : arrays)
        out.append(reinterpret_cast<const char*>(vec.data()), sizeof(double) * vec.size());
    detail::append_u32(out, detail::crc_of(out, out.size()));
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), detail::kCkptMagic, 8) != 0)
        throw CheckpointError("not a checkpoint file");
    const std::size_t body = bytes.size() - 4;
    if (detail::read_u32(bytes, body) != detail::crc_of(bytes, body))
        throw CheckpointError("checkpoint is corrupted (crc mismatch)");
    const std::size_t hlen = detail::read_u32(bytes, 8);
    if (12 + hlen > body) throw CheckpointError("checkpoint header is truncated");

    Json header;
    try {
        header = Json::parse(bytes.substr(12, hlen));
    } catch (const Json::exception&) {
        throw CheckpointError("checkpoint header is not valid JSON");
    }

    Checkpoint ck;
    try {
        ck.model = model_from_json(header.at("model"));
        std::size_t off = 12 + hlen;
        for (const auto& entry : header.at("arrays")) {
            const std::string name = entry.at("name").get<std::string>();
            const auto len = entry.at("len").get<Eigen::Index>();
            if (len < 0 || off + sizeof(double) * static_cast<std::size_t>(len) > body)
                throw CheckpointError("checkpoint payload is truncated");
            Eigen::VectorXd v(len);
            std::memcpy(v.data(), bytes.data() + off, sizeof(double) * static_cast<std::size_t>(len));
            off += sizeof(double) * static_cast<std::size_t>(len);
            ck.arrays.emplace_back(name, std::move(v));
        }
        if (off != body) throw CheckpointError("checkpoint has trailing bytes");
    } catch (const Json::exception&) {
        throw CheckpointError("checkpoint header is malformed");
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
    }
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& model,
                            const std::vector<std::pair<std::string, Eigen::VectorXd>>& arrays) {
    detail::write_file(path, encode_checkpoint(model, arrays));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file(path));
}

// --- run history --------------------------------------------------------

// History JSON holds everything except the parameter vector, which lives in
// the binary checkpoint next to it. Doubles survive the round trip exactly:
// the serializer emits shortest-round-trip decimal forms.

inline std::string fingerprint_hex(std::uint64_t fp) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
    return std::string(buf);
}

inline std::uint64_t fingerprint_from_hex(const std::string& s) {
    if (s.size() != 16) throw CheckpointError("bad fingerprint '" + s + "'");
    return std::strtoull(s.c_str(), nullptr, 16);
}

inline Json run_record_json(const RunRecord& rec) {
    Json hist = Json::array();
    for (const auto& lb : rec.history)
        hist.push_back(Json{{"iteration", lb.iteration},
                            {"total", lb.total},
                            {"terms", lb.terms},
                            {"weights", lb.weights}});
    return Json{{"problem", rec.problem},
                {"model_tag", rec.model_tag},
                {"model", to_json(rec.model)},
                {"adam", to_json(rec.adam)},
                {"seed", rec.seed},
                {"set_fingerprint", fingerprint_hex(rec.set_fingerprint)},
                {"param_count", rec.param_count},
                {"budget", rec.budget},
                {"wall_seconds", rec.wall_seconds},
                {"aborted", rec.aborted},
                {"abort_step", rec.abort_step},
                {"history", hist}};
}

inline RunRecord run_record_from_json(const Json& j) {
    RunRecord rec;
    try {
        rec.problem = j.at("problem").get<std::string>();
        rec.model_tag = j.at("model_tag").get<std::string>();
        rec.model = model_from_json(j.at("model"));
        rec.adam = adam_from_json(j.at("adam"));
        rec.seed = j.at("seed").get<std::uint64_t>();
        rec.set_fingerprint = fingerprint_from_hex(j.at("set_fingerprint").get<std::string>());
        rec.param_count = j.at("param_count").get<Eigen::Index>();
        rec.budget = j.at("budget").get<int>();
        rec.wall_seconds = j.at("wall_seconds").get<double>();
        rec.aborted = j.at("aborted").get<bool>();
        rec.abort_step = j.at("abort_step").get<int>();
        for (const auto& h : j.at("history")) {
            LossBreakdown lb;
            lb.iteration = h.at("iteration").get<int>();
            lb.total = h.at("total").get<double>();
            lb.terms = h.at("terms").get<std::vector<double>>();
            lb.weights = h.at("weights").get<std::vector<double>>();
            rec.history.push_back(std::move(lb));
        }
    } catch (const Json::exception& e) {
        throw CheckpointError(std::string("history is malformed: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("history config is invalid: ") + e.what());
    }
    return rec;
}

inline void save_history(const std::filesystem::path& path, const RunRecord& rec) {
    detail::write_file(path, run_record_json(rec).dump(2) + "\n");
}

inline RunRecord load_history(const std::filesystem::path& path) {
    Json j;
    try {
        j = Json::parse(detail::read_file(path));
    } catch (const Json::exception&) {
        throw CheckpointError("history file is not valid JSON: " + path.string());
    }
    return run_record_from_json(j);
}

}  // namespace pinn

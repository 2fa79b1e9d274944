#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fourcrop/model.hpp"

// Checkpoint layout (little-endian host assumed):
//   "FCN1"
//   u32 length + JSON config (model fields, dtype, class names)
//   per parameter, in registry order:
//     u32 name length, name bytes, u32 rank, u64 extents..., raw scalars
//   u32 CRC-32 of every preceding byte
namespace fourcrop {

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

template <class T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
    return "f32";
}
template <>
inline const char* dtype_name<double>() {
    return "f64";
}

inline void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;
    const std::string& path;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n)
            throw ChecksumError("checkpoint " + path + " is truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
};

inline nlohmann::json config_json(const ModelConfig& cfg,
                                  const std::vector<std::string>& class_names,
                                  const char* dtype) {
    return nlohmann::json{{"input_size", cfg.input_size},
                          {"channel_plan", cfg.channel_plan},
                          {"fc_plan", cfg.fc_plan},
                          {"dropout", cfg.dropout},
                          {"num_classes", cfg.num_classes},
                          {"se_reduction", cfg.se_reduction},
                          {"head", head_name(cfg.head)},
                          {"dtype", dtype},
                          {"class_names", class_names}};
}

} // namespace detail

template <class T>
void save_checkpoint(Model<T>& model, const std::vector<std::string>& class_names,
                     const std::string& path) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), {'F', 'C', 'N', '1'});

    const std::string cfg_str =
        detail::config_json(model.config(), class_names, detail::dtype_name<T>()).dump();
    detail::put_u32(buf, static_cast<std::uint32_t>(cfg_str.size()));
    buf.insert(buf.end(), cfg_str.begin(), cfg_str.end());

    for (const auto& p : model.params()) {
        detail::put_u32(buf, static_cast<std::uint32_t>(p.name.size()));
        buf.insert(buf.end(), p.name.begin(), p.name.end());
        detail::put_u32(buf, static_cast<std::uint32_t>(p.value->rank()));
        for (std::size_t a = 0; a < p.value->rank(); ++a) detail::put_u64(buf, p.value->extent(a));
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.value->data());
        buf.insert(buf.end(), bytes, bytes + p.value->size() * sizeof(T));
    }
    detail::put_u32(buf, detail::crc32(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("short write to " + path);
}

template <class T>
struct LoadedCheckpoint {
    ModelConfig cfg;
    std::vector<std::string> class_names;
    Model<T> model;
};

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

    if (buf.size() < 8 || std::memcmp(buf.data(), "FCN1", 4) != 0)
        throw ChecksumError("checkpoint " + path + " has no FCN1 header");
    const std::size_t body = buf.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[body + i]) << (8 * i);
    if (detail::crc32(buf.data(), body) != stored)
        throw ChecksumError("checkpoint " + path + " failed its checksum (corrupt or truncated)");

    detail::Reader r{buf.data() + 4, buf.data() + body, path};
    const std::uint32_t cfg_len = r.u32();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(r.str(cfg_len));
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumError("checkpoint " + path + " config block unreadable: " + e.what());
    }

    ModelConfig cfg;
    std::vector<std::string> class_names;
    std::string dtype;
    try {
        cfg.input_size = j.at("input_size").get<std::size_t>();
        cfg.channel_plan = j.at("channel_plan").get<std::vector<std::size_t>>();
        cfg.fc_plan = j.at("fc_plan").get<std::vector<std::size_t>>();
        cfg.dropout = j.at("dropout").get<double>();
        cfg.num_classes = j.at("num_classes").get<std::size_t>();
        cfg.se_reduction = j.at("se_reduction").get<std::size_t>();
        cfg.head = head_from_name(j.at("head").get<std::string>());
        dtype = j.at("dtype").get<std::string>();
        class_names = j.at("class_names").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw VersionError("checkpoint " + path + " config block misses a field: " + e.what());
    }
    if (dtype != detail::dtype_name<T>())
        throw VersionError("checkpoint field 'dtype' is " + dtype + ", this session needs " +
                           detail::dtype_name<T>());

    LoadedCheckpoint<T> out{cfg, std::move(class_names), Model<T>(cfg)};
    for (const auto& p : out.model.params()) {
        const std::string name = r.str(r.u32());
        if (name != p.name)
            throw VersionError("checkpoint parameter order mismatch: expected " + p.name +
                               ", found " + name);
        const std::uint32_t rank = r.u32();
        Shape shape(rank);
        for (auto& e : shape) e = r.u64();
        if (shape != p.value->shape())
            throw VersionError("checkpoint parameter " + p.name + " has shape " +
                               shape_str(shape) + ", model expects " +
                               shape_str(p.value->shape()));
        r.need(p.value->size() * sizeof(T));
        std::memcpy(p.value->data(), r.p, p.value->size() * sizeof(T));
        r.p += p.value->size() * sizeof(T);
    }
    if (r.p != r.end) throw ChecksumError("checkpoint " + path + " has trailing bytes");
    return out;
}

// Reads only the header, so callers can pick the right precision before a
// full load (which re-verifies everything including the checksum).
inline std::string peek_checkpoint_dtype(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::vector<unsigned char> buf(16384);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    buf.resize(static_cast<std::size_t>(in.gcount()));

    if (buf.size() < 8 || std::memcmp(buf.data(), "FCN1", 4) != 0)
        throw ChecksumError("checkpoint " + path + " has no FCN1 header");
    detail::Reader r{buf.data() + 4, buf.data() + buf.size(), path};
    const std::uint32_t cfg_len = r.u32();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(r.str(cfg_len));
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumError("checkpoint " + path + " has a malformed header: " + e.what());
    }
    if (!j.contains("dtype"))
        throw VersionError("checkpoint " + path + " is missing the dtype field");
    return j["dtype"].get<std::string>();
}

// First differing field wins the error message.
inline void require_matching_config(const ModelConfig& expected, const ModelConfig& actual) {
    auto fail = [](const std::string& field, const std::string& want, const std::string& got) {
        throw VersionError("checkpoint field '" + field + "' is " + got + ", session expects " +
                           want);
    };
    if (expected.input_size != actual.input_size)
        fail("input_size", std::to_string(expected.input_size),
             std::to_string(actual.input_size));
    if (expected.channel_plan != actual.channel_plan)
        fail("channel_plan", shape_str(expected.channel_plan), shape_str(actual.channel_plan));
    if (expected.fc_plan != actual.fc_plan)
        fail("fc_plan", shape_str(expected.fc_plan), shape_str(actual.fc_plan));
    if (expected.dropout != actual.dropout)
        fail("dropout", std::to_string(expected.dropout), std::to_string(actual.dropout));
    if (expected.num_classes != actual.num_classes)
        fail("num_classes", std::to_string(expected.num_classes),
             std::to_string(actual.num_classes));
    if (expected.se_reduction != actual.se_reduction)
        fail("se_reduction", std::to_string(expected.se_reduction),
             std::to_string(actual.se_reduction));
    if (expected.head != actual.head)
        fail("head", head_name(expected.head), head_name(actual.head));
}

} // namespace fourcrop

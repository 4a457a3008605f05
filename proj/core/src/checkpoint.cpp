#include "siamattack/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "siamattack/error.hpp"

namespace siam {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'T', 'K', 'C', 'K', 'P', 'T'};
constexpr uint32_t kFormatVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw IoError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    nlohmann::json header;
    header["format_version"] = kFormatVersion;
    header["kind"] = ck.kind;
    try {
        header["config"] = nlohmann::json::parse(ck.config_json);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint config is not valid JSON: " + std::string(e.what()));
    }
    nlohmann::json index = nlohmann::json::array();
    int64_t offset = 0;  // in floats from payload start
    for (const auto& [name, t] : ck.tensors) {
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.numel();
    }
    header["tensors"] = std::move(index);
    const std::string hdr = header.dump();  // object keys sorted -> stable bytes

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, static_cast<uint32_t>(hdr.size()));
    os.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    for (const auto& [name, t] : ck.tensors)
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!os) throw IoError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("'" + path + "' is not a checkpoint file");
    const uint32_t hdr_len = read_u32(is);
    std::string hdr(hdr_len, '\0');
    is.read(hdr.data(), hdr_len);
    if (!is) throw IoError("truncated header in '" + path + "'");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hdr);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad checkpoint header in '" + path + "': " + std::string(e.what()));
    }
    if (header.value("format_version", 0u) != kFormatVersion)
        throw IoError("unsupported checkpoint version in '" + path + "'");

    Checkpoint ck;
    ck.kind = header.value("kind", "");
    ck.config_json = header.contains("config") ? header["config"].dump() : "{}";
    for (const auto& e : header["tensors"]) {
        const std::string name = e["name"].get<std::string>();
        const std::vector<int> shape = e["shape"].get<std::vector<int>>();
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!is) throw IoError("truncated tensor '" + name + "' in '" + path + "'");
        ck.tensors.emplace_back(name, std::move(t));
    }
    return ck;
}

Checkpoint snapshot_params(const std::string& kind, const std::string& config_json,
                           const std::vector<nn::Param>& params) {
    Checkpoint ck;
    ck.kind = kind;
    ck.config_json = config_json;
    for (const auto& p : params) ck.tensors.emplace_back(p.name, p.var->value);
    return ck;
}

void restore_params(const Checkpoint& ck, const std::vector<nn::Param>& params) {
    if (ck.tensors.size() != params.size())
        throw IoError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, module expects " +
                      std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = ck.tensors[i];
        if (name != params[i].name)
            throw IoError("tensor " + std::to_string(i) + " is '" + name + "', expected '" + params[i].name + "'");
        if (!t.same_shape(params[i].var->value))
            throw IoError("tensor '" + name + "' shape " + t.shape_str() + " does not match module " +
                          params[i].var->value.shape_str());
        params[i].var->value = t;
    }
}

uint64_t hash_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
    }
    return h;
}

uint64_t hash_tensor(const Tensor& t) {
    return fnv1a64(t.data(), static_cast<size_t>(t.numel()) * sizeof(float));
}

}  // namespace siam

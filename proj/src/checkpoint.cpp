#include "vary/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vary {

namespace {

constexpr char kMagic[8] = {'V', 'A', 'R', 'Y', 'W', 'B', '0', '1'};

void put_u32le(std::ostream& os, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                          static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32le(std::istream& is) {
    uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("weight blob: truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32le(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32le(os, v);
}

float get_f32le(std::istream& is) {
    const uint32_t v = get_u32le(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace

void save_params_to_blob(const std::string& path, const std::vector<Parameter*>& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kMagic, 8);
    put_u32le(os, static_cast<uint32_t>(params.size()));
    for (Parameter* p : params) {
        put_u32le(os, static_cast<uint32_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32le(os, static_cast<uint32_t>(p->value.shape().size()));
        for (int d : p->value.shape()) put_u32le(os, static_cast<uint32_t>(d));
        for (size_t i = 0; i < p->value.numel(); ++i) {
            const float f = static_cast<float>(p->value[i]);
            put_f32le(os, f);
            p->value[i] = static_cast<double>(f);  // snap so the round trip is exact
        }
    }
    if (!os) throw DataError("short write: " + path);
}

void load_params_from_blob(const std::string& path, std::vector<Parameter*> params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open weight blob: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("not a weight blob: " + path);
    const uint32_t count = get_u32le(is);

    std::map<std::string, Parameter*> by_name;
    for (Parameter* p : params) by_name[p->name] = p;
    size_t loaded = 0;
    for (uint32_t e = 0; e < count; ++e) {
        const uint32_t name_len = get_u32le(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint32_t ndim = get_u32le(is);
        std::vector<int> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(get_u32le(is));
        const size_t numel = Tensor::numel_of(shape);
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw DataError("weight blob " + path + " has unknown entry '" + name + "'");
        Parameter* p = it->second;
        if (p->value.shape() != shape)
            throw DataError("shape mismatch for '" + name + "': blob " +
                            Tensor(shape).shape_str() + " vs model " + p->value.shape_str());
        for (size_t i = 0; i < numel; ++i) p->value[i] = static_cast<double>(get_f32le(is));
        ++loaded;
    }
    if (loaded != by_name.size())
        throw DataError("weight blob " + path + " is missing " +
                        std::to_string(by_name.size() - loaded) + " parameter(s)");
}

void CheckpointMeta::save(const std::string& path) const {
    std::ostringstream os;
    os << "kind: " << kind << "\n";
    os << "phase: " << phase << "\n";
    os << "step: " << step << "\n";
    os << "seed: " << seed << "\n";
    for (const auto& [k, v] : extra) os << k << ": " << v << "\n";
    os << "loss_tail:";
    for (double l : loss_tail) os << " " << l;
    os << "\n";
    write_text_file(path, os.str());
}

CheckpointMeta CheckpointMeta::load(const std::string& path) {
    CheckpointMeta meta;
    std::istringstream is(read_text_file(path));
    std::string line;
    while (std::getline(is, line)) {
        const size_t colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = line.substr(0, colon);
        std::string value = line.substr(colon + 1);
        if (!value.empty() && value.front() == ' ') value.erase(0, 1);
        if (key == "kind")
            meta.kind = value;
        else if (key == "phase")
            meta.phase = value;
        else if (key == "step")
            meta.step = std::stol(value);
        else if (key == "seed")
            meta.seed = std::stoull(value);
        else if (key == "loss_tail") {
            std::istringstream ls(value);
            double v;
            while (ls >> v) meta.loss_tail.push_back(v);
        } else
            meta.extra[key] = value;
    }
    return meta;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << content;
    if (!os) throw DataError("short write: " + path);
}

}  // namespace vary

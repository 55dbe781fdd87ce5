#include "retouch/weights.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace retouch {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("weights: " + path + ": " + what);
}

void write_bytes(std::FILE* f, const void* p, size_t n, const std::string& path) {
    if (std::fwrite(p, 1, n, f) != n) fail(path, "write failed");
}

void read_bytes(std::FILE* f, void* p, size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n) fail(path, "truncated file");
}

void write_u16(std::FILE* f, uint16_t v, const std::string& path) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    write_bytes(f, b, 2, path);
}

void write_u32(std::FILE* f, uint32_t v, const std::string& path) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(f, b, 4, path);
}

uint16_t read_u16(std::FILE* f, const std::string& path) {
    unsigned char b[2];
    read_bytes(f, b, 2, path);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t read_u32(std::FILE* f, const std::string& path) {
    unsigned char b[4];
    read_bytes(f, b, 4, path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

WeightEntry& WeightStore::get(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::runtime_error("weights: missing entry '" + name + "'");
    return it->second;
}

const WeightEntry& WeightStore::get(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::runtime_error("weights: missing entry '" + name + "'");
    return it->second;
}

void save_weights(const WeightStore& store, const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail(path, "cannot open for writing");
    std::FILE* f = fp.get();
    write_bytes(f, "RTWF", 4, path);
    write_u32(f, kWeightFormatVersion, path);
    write_u32(f, static_cast<uint32_t>(store.entries.size()), path);
    for (const auto& [name, entry] : store.entries) {
        if (name.size() > 0xffff) fail(path, "entry name too long");
        if (entry.dims.size() > 0xff) fail(path, "entry rank too large");
        if (entry.values.size() != entry.element_count()) {
            fail(path, "entry '" + name + "' has inconsistent dims");
        }
        write_u16(f, static_cast<uint16_t>(name.size()), path);
        write_bytes(f, name.data(), name.size(), path);
        unsigned char rank = static_cast<unsigned char>(entry.dims.size());
        write_bytes(f, &rank, 1, path);
        for (uint32_t d : entry.dims) write_u32(f, d, path);
        static_assert(sizeof(float) == 4);
        for (float v : entry.values) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            write_u32(f, bits, path);
        }
    }
}

WeightStore load_weights(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail(path, "cannot open file");
    std::FILE* f = fp.get();
    char magic[4];
    read_bytes(f, magic, 4, path);
    if (std::memcmp(magic, "RTWF", 4) != 0) fail(path, "bad magic (not an RTWF weight file)");
    uint32_t version = read_u32(f, path);
    if (version != kWeightFormatVersion) {
        fail(path, "unsupported version " + std::to_string(version));
    }
    uint32_t count = read_u32(f, path);
    WeightStore store;
    for (uint32_t e = 0; e < count; ++e) {
        uint16_t name_len = read_u16(f, path);
        std::string name(name_len, '\0');
        read_bytes(f, name.data(), name_len, path);
        unsigned char rank;
        read_bytes(f, &rank, 1, path);
        WeightEntry entry;
        entry.dims.resize(rank);
        for (int i = 0; i < rank; ++i) entry.dims[i] = read_u32(f, path);
        entry.values.resize(entry.element_count());
        for (float& v : entry.values) {
            uint32_t bits = read_u32(f, path);
            std::memcpy(&v, &bits, 4);
        }
        store.entries.emplace(std::move(name), std::move(entry));
    }
    return store;
}

}  // namespace retouch

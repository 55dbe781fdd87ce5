#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace retouch {

// Named float32 arrays with shapes. On-disk format "RTWF":
//   magic "RTWF", version u32 LE, entry count u32 LE, then per entry:
//   name length u16 LE, UTF-8 name, rank u8, dims u32 LE each,
//   raw little-endian float32 values.
struct WeightEntry {
    std::vector<uint32_t> dims;
    std::vector<float> values;

    size_t element_count() const {
        size_t n = 1;
        for (uint32_t d : dims) n *= d;
        return n;
    }
};

struct WeightStore {
    std::map<std::string, WeightEntry> entries;  // sorted for canonical files

    bool has(const std::string& name) const { return entries.count(name) != 0; }
    WeightEntry& get(const std::string& name);
    const WeightEntry& get(const std::string& name) const;
};

constexpr uint32_t kWeightFormatVersion = 1;

void save_weights(const WeightStore& store, const std::string& path);
WeightStore load_weights(const std::string& path);

}  // namespace retouch

#pragma once

#include <array>
#include <string>
#include <vector>

#include "retouch/image.hpp"
#include "retouch/net.hpp"
#include "retouch/weights.hpp"

namespace retouch {

constexpr int kNumShapeClasses = 5;
const char* shape_class_name(int label);  // circle, square, triangle, cross, ring

// Deliberately color-biased shape classification task: the foreground and
// background hues correlate with the label at strength rho, which is the
// surface retouching attacks exploit.
struct SyntheticDatasetSpec {
    int image_size = 64;
    double color_shortcut_rho = 0.8;
    int train_count = 2000;
    int test_count = 500;
    uint64_t seed = 0;
};

struct ManifestEntry {
    std::string file;  // relative to the dataset directory
    int label = 0;
    std::string split;  // "train" or "test"
    double fg_hue_deg = 0.0;
};

// Writes PNGs plus manifest.json into out_dir; deterministic per seed.
std::vector<ManifestEntry> generate_dataset(const SyntheticDatasetSpec& spec,
                                            const std::string& out_dir);

void save_manifest(const std::vector<ManifestEntry>& manifest, const std::string& path);
std::vector<ManifestEntry> load_manifest(const std::string& path);

// Renders one sample without touching the filesystem.
ImageTensor render_shape_image(int size, int label, double fg_hue_deg, double bg_hue_deg,
                               Rng& rng);

struct VictimTrainConfig {
    int epochs = 10;
    double lr = 0.001;
    int batch_size = 32;
    uint64_t seed = 0;
};

struct VictimTrainResult {
    WeightStore weights;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::vector<double> epoch_losses;
};

// Trains the default victim architecture with Adam and softmax cross-entropy
// over the dataset directory written by generate_dataset.
VictimTrainResult train_victim(const std::string& data_dir, const VictimTrainConfig& config);

struct EvalResult {
    double accuracy = 0.0;
    int count = 0;
    std::array<std::array<int, kNumShapeClasses>, kNumShapeClasses> confusion{};  // [true][pred]
};

EvalResult evaluate_victim(const WeightStore& weights, const std::string& data_dir,
                           const std::string& split);

// Victim restored from stored weights at attack precision.
Network<double> load_victim(const WeightStore& store, int image_size = 64);

}  // namespace retouch

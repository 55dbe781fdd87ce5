#pragma once

#include <array>
#include <string>
#include <vector>

#include "retouch/image.hpp"
#include "retouch/net.hpp"
#include "retouch/weights.hpp"

namespace retouch {

constexpr int kStyleHistBins = 32;

// Per-channel Lab statistics with smoothed (Gaussian soft-binned) histograms.
struct ChannelStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::array<double, kStyleHistBins> hist{};
};

// Aggregated corpus statistics describing a reference retouching style.
// All statistics live in Lab over the linearized image.
struct StyleReference {
    std::array<ChannelStats, 3> lab;
    int image_count = 0;
};

// Lab histogram ranges: L in [0,100], a/b in [-110,110].
double style_hist_lo(int channel);
double style_hist_hi(int channel);

// Statistics of one image (Lab over LinearSRGB pixels).
std::array<ChannelStats, 3> image_lab_stats(const ImageTensor& linear_img);

// Averages per-image statistics over every PNG in the directory, in sorted
// filename order. Throws on an empty or unreadable corpus.
StyleReference build_reference(const std::string& corpus_dir);
StyleReference build_reference_from_images(const std::vector<ImageTensor>& nonlinear_images);

void save_reference_json(const StyleReference& ref, const std::string& path);
StyleReference load_reference_json(const std::string& path);

// loss = sum_c [(mu-mu_ref)^2 + (sigma-sigma_ref)^2] + w_h sum_{c,b} (h-h_ref)^2
// on a LinearSRGB image, with w_h = 10. d_img, when non-null, receives the
// gradient w.r.t. the linear RGB pixels.
constexpr double kHistLossWeight = 10.0;
double statistic_style_loss(const ImageTensor& linear_img, const StyleReference& ref,
                            ImageTensor* d_img = nullptr);

// Mean of the predictor's non-negative deviation map (relu of the U-Net
// output) on a LinearSRGB image.
double predictor_style_loss(const ImageTensor& linear_img, const Network<double>& predictor,
                            ImageTensor* d_img = nullptr);

// Either style loss behind one interface.
enum class StyleLossKind { Statistic, Predictor };

struct StyleGuide {
    StyleLossKind kind = StyleLossKind::Statistic;
    StyleReference reference;
    Network<double> predictor;

    double evaluate(const ImageTensor& linear_img, ImageTensor* d_img = nullptr) const;
};

// Training data for the predictor: a random global operator chain applied to
// a standard image, labeled with the per-pixel L2 deviation map.
struct StyleTrainConfig {
    int epochs = 500;
    double lr = 0.001;
    int chain_length = 5;  // random operators per generated pair
    int base_width = 8;
    uint64_t seed = 0;
    bool neutral_params = false;  // degenerate all-zero targets (tests)
};

// Per-pixel Euclidean distance over channels between two same-shape images.
std::vector<double> deviation_map(const ImageTensor& a, const ImageTensor& b);

// Applies a random operator chain with parameters drawn uniformly from each
// operator's range. neutral_params forces every draw to the identity.
ImageTensor random_retouch(const ImageTensor& linear_img, int chain_length, Rng& rng,
                           bool neutral_params = false);

struct StyleTrainResult {
    WeightStore weights;
    std::vector<double> epoch_losses;
};
StyleTrainResult train_style_predictor(const std::vector<ImageTensor>& nonlinear_corpus,
                                       const StyleTrainConfig& config);
StyleTrainResult train_style_predictor(const std::string& corpus_dir,
                                       const StyleTrainConfig& config);

// Rebuild a predictor network from stored weights (width inferred from the
// first conv layer).
Network<double> load_style_predictor(const WeightStore& store);

}  // namespace retouch

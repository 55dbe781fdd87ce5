#pragma once

#include <string>
#include <vector>

#include "retouch/image.hpp"
#include "retouch/rng.hpp"
#include "retouch/weights.hpp"

namespace retouch {

// Planar channel-major feature tensor (C, H, W).
template <typename T>
struct Tensor {
    int ch = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, T fill = T(0))
        : ch(c_), h(h_), w(w_), data(static_cast<size_t>(c_) * h_ * w_, fill) {}

    size_t size() const { return data.size(); }
    T& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * h + y) * w + x]; }
    T at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * h + y) * w + x]; }
    bool same_shape(const Tensor& o) const { return ch == o.ch && h == o.h && w == o.w; }
};

enum class LayerKind {
    Conv,                 // same-padded square conv with bias
    BatchNormInference,   // scale/shift with stored statistics
    ReLU,
    MaxPool,              // 2x2, stride 2
    UpSample,             // 2x2 nearest
    Concat,               // channel concat with an earlier layer's output
    Dense,                // flatten + affine
    SoftmaxCrossEntropy,  // loss head; forward emits probabilities
};

struct LayerSpec {
    LayerKind kind;
    int out_channels = 0, kernel = 0, stride = 1;  // Conv
    int out_dim = 0;                               // Dense
    int concat_src = -1;                           // Concat: earlier layer index

    static LayerSpec conv(int out_ch, int k, int s) {
        return {LayerKind::Conv, out_ch, k, s, 0, -1};
    }
    static LayerSpec batch_norm() { return {LayerKind::BatchNormInference}; }
    static LayerSpec relu() { return {LayerKind::ReLU}; }
    static LayerSpec max_pool() { return {LayerKind::MaxPool}; }
    static LayerSpec up_sample() { return {LayerKind::UpSample}; }
    static LayerSpec concat(int src) { return {LayerKind::Concat, 0, 0, 1, 0, src}; }
    static LayerSpec dense(int out) { return {LayerKind::Dense, 0, 0, 1, out, -1}; }
    static LayerSpec softmax_cross_entropy() { return {LayerKind::SoftmaxCrossEntropy}; }
};

template <typename T>
struct LayerWeights {
    std::vector<T> w, b;                      // Conv / Dense
    std::vector<T> gamma, beta, mean, var;    // BatchNormInference
};

// Forward activation cache; single-use, owned by the caller.
template <typename T>
struct NetCache {
    Tensor<T> input;
    std::vector<Tensor<T>> outputs;            // per layer
    std::vector<std::vector<int>> pool_argmax; // per layer (MaxPool only)
};

template <typename T>
struct NetGrads {
    Tensor<T> d_input;
    std::vector<LayerWeights<T>> weights;  // empty unless requested
};

// An ordered layer list with weights. Spatial dimensions are taken from the
// input at forward time; Dense layers pin the flattened size they were
// built with. in_ch/in_h/in_w record the shape used to size the weights.
template <typename T>
class Network {
  public:
    std::vector<LayerSpec> layers;
    std::vector<LayerWeights<T>> weights;
    std::vector<int> layer_in_channels;  // filled by build (concat widens)
    int in_ch = 0, in_h = 0, in_w = 0;

    // Computes per-layer weight shapes for the declared input and leaves
    // weights zero-initialized.
    void build(std::vector<LayerSpec> specs, int in_ch_, int in_h_, int in_w_);
    void init_weights(Rng& rng);  // He-scaled normal init

    NetCache<T> forward(const Tensor<T>& input) const;

    // Index of the layer whose output is the network's logits/features
    // (skips a trailing SoftmaxCrossEntropy loss head).
    int output_layer() const;
    const Tensor<T>& output(const NetCache<T>& cache) const {
        return cache.outputs[output_layer()];
    }

    // VJP from a gradient w.r.t. output_layer()'s output back to the input
    // (and the weights, when want_weight_grads).
    NetGrads<T> backward(const NetCache<T>& cache, const Tensor<T>& d_output,
                         bool want_weight_grads) const;

    // Named weight arrays, e.g. "layer0.w"; shapes are preserved.
    WeightStore export_weights() const;
    void import_weights(const WeightStore& store);

    size_t parameter_count() const;
};

// One Adam step over every trainable array (conv/dense weights and biases,
// batch-norm scale/shift; stored statistics stay frozen).
struct AdamState;
template <typename T>
void adam_step(Network<T>& net, const std::vector<LayerWeights<T>>& grads, AdamState& state,
               double lr);

// Stable softmax cross-entropy on a logits vector.
template <typename T>
struct CeResult {
    double loss = 0.0;
    std::vector<T> probs;
    std::vector<T> d_logits;  // probs - onehot(label)
};
template <typename T>
CeResult<T> softmax_cross_entropy(const std::vector<T>& logits, int label);

template <typename T>
int argmax_index(const std::vector<T>& v);

// victim classifier: Conv(16,3,1)-ReLU-MaxPool-Conv(32,3,1)-ReLU-MaxPool-
// Dense(num_classes)-SoftmaxCrossEntropy for a given input size.
template <typename T>
Network<T> make_victim_network(int num_classes, int in_h, int in_w);

// Encoder-decoder with skip connections emitting a 1-channel deviation map;
// base_width scales all channel counts (default desk-scale 8).
template <typename T>
Network<T> make_style_unet(int base_width = 8);

// ImageTensor (H,W,3 interleaved) <-> planar tensors.
template <typename T>
Tensor<T> image_to_tensor(const ImageTensor& img);
// Reinterpret a (3,H,W) gradient tensor as an H*W*3 gradient image.
ImageTensor tensor_to_image_grad(const Tensor<float>& t);
ImageTensor tensor_to_image_grad(const Tensor<double>& t);

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class Network<float>;
extern template class Network<double>;

}  // namespace retouch

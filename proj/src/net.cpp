#include "retouch/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "retouch/optim.hpp"

namespace retouch {

namespace {

constexpr double kBnEps = 1e-5;

int conv_out_size(int in, int kernel, int stride) {
    const int pad = (kernel - 1) / 2;
    return (in + 2 * pad - kernel) / stride + 1;
}

struct Range {
    int lo, hi;  // inclusive output-coordinate range with in-bounds taps
};

Range tap_range(int out_size, int in_size, int stride, int offset) {
    // valid out o with 0 <= o*stride + offset < in_size
    int lo = offset < 0 ? (-offset + stride - 1) / stride : 0;
    int hi = (in_size - 1 - offset) / stride;
    return {std::max(lo, 0), std::min(hi, out_size - 1)};
}

}  // namespace

template <typename T>
void Network<T>::build(std::vector<LayerSpec> specs, int in_ch_, int in_h_, int in_w_) {
    layers = std::move(specs);
    in_ch = in_ch_;
    in_h = in_h_;
    in_w = in_w_;
    weights.assign(layers.size(), {});

    int ch = in_ch, h = in_h, w = in_w;
    layer_in_channels.assign(layers.size(), 0);
    std::vector<std::array<int, 3>> shapes;  // output shape per layer
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& spec = layers[i];
        LayerWeights<T>& lw = weights[i];
        layer_in_channels[i] = ch;
        switch (spec.kind) {
            case LayerKind::Conv: {
                if (spec.kernel < 1 || spec.kernel % 2 == 0 || spec.stride < 1) {
                    throw std::invalid_argument("Conv needs an odd kernel and stride >= 1");
                }
                lw.w.assign(static_cast<size_t>(spec.out_channels) * ch * spec.kernel *
                                spec.kernel,
                            T(0));
                lw.b.assign(spec.out_channels, T(0));
                h = conv_out_size(h, spec.kernel, spec.stride);
                w = conv_out_size(w, spec.kernel, spec.stride);
                ch = spec.out_channels;
                break;
            }
            case LayerKind::BatchNormInference:
                lw.gamma.assign(ch, T(1));
                lw.beta.assign(ch, T(0));
                lw.mean.assign(ch, T(0));
                lw.var.assign(ch, T(1));
                break;
            case LayerKind::ReLU: break;
            case LayerKind::MaxPool:
                if (h % 2 != 0 || w % 2 != 0) {
                    throw std::invalid_argument("MaxPool needs even spatial dims");
                }
                h /= 2;
                w /= 2;
                break;
            case LayerKind::UpSample:
                h *= 2;
                w *= 2;
                break;
            case LayerKind::Concat: {
                if (spec.concat_src < 0 || spec.concat_src >= static_cast<int>(i)) {
                    throw std::invalid_argument("Concat source must be an earlier layer");
                }
                const auto& src = shapes[spec.concat_src];
                if (src[1] != h || src[2] != w) {
                    throw std::invalid_argument("Concat spatial shape mismatch");
                }
                ch += src[0];
                break;
            }
            case LayerKind::Dense:
                lw.w.assign(static_cast<size_t>(spec.out_dim) * ch * h * w, T(0));
                lw.b.assign(spec.out_dim, T(0));
                ch = spec.out_dim;
                h = 1;
                w = 1;
                break;
            case LayerKind::SoftmaxCrossEntropy:
                if (i + 1 != layers.size()) {
                    throw std::invalid_argument("SoftmaxCrossEntropy must be the last layer");
                }
                break;
        }
        shapes.push_back({ch, h, w});
    }
}

template <typename T>
void Network<T>::init_weights(Rng& rng) {
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& spec = layers[i];
        LayerWeights<T>& lw = weights[i];
        if (spec.kind == LayerKind::Conv) {
            const double std = std::sqrt(
                2.0 / (static_cast<double>(layer_in_channels[i]) * spec.kernel * spec.kernel));
            for (T& v : lw.w) v = static_cast<T>(rng.normal() * std);
            std::fill(lw.b.begin(), lw.b.end(), T(0));
        } else if (spec.kind == LayerKind::Dense) {
            const double std = std::sqrt(2.0 / static_cast<double>(lw.w.size() / spec.out_dim));
            for (T& v : lw.w) v = static_cast<T>(rng.normal() * std);
            std::fill(lw.b.begin(), lw.b.end(), T(0));
        }
    }
}

template <typename T>
int Network<T>::output_layer() const {
    int last = static_cast<int>(layers.size()) - 1;
    if (last >= 0 && layers[last].kind == LayerKind::SoftmaxCrossEntropy) --last;
    if (last < 0) throw std::logic_error("network has no output layer");
    return last;
}

// ---------------------------------------------------------------------------
// layer kernels

namespace {

template <typename T>
void conv_forward(const Tensor<T>& in, const LayerSpec& spec, const LayerWeights<T>& lw,
                  Tensor<T>& out) {
    const int k = spec.kernel, s = spec.stride, pad = (k - 1) / 2;
    const int oc_n = spec.out_channels, ic_n = in.ch;
    out = Tensor<T>(oc_n, conv_out_size(in.h, k, s), conv_out_size(in.w, k, s));
    for (int oc = 0; oc < oc_n; ++oc) {
        T* plane = &out.data[static_cast<size_t>(oc) * out.h * out.w];
        std::fill(plane, plane + static_cast<size_t>(out.h) * out.w, lw.b[oc]);
    }
    for (int oc = 0; oc < oc_n; ++oc) {
        for (int ic = 0; ic < ic_n; ++ic) {
            const T* wbase = &lw.w[((static_cast<size_t>(oc) * ic_n) + ic) * k * k];
            for (int ky = 0; ky < k; ++ky) {
                const Range ry = tap_range(out.h, in.h, s, ky - pad);
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = wbase[ky * k + kx];
                    if (wv == T(0)) continue;
                    const Range rx = tap_range(out.w, in.w, s, kx - pad);
                    for (int oy = ry.lo; oy <= ry.hi; ++oy) {
                        const int iy = oy * s + ky - pad;
                        const T* irow = &in.data[(static_cast<size_t>(ic) * in.h + iy) * in.w];
                        T* orow = &out.data[(static_cast<size_t>(oc) * out.h + oy) * out.w];
                        const int off = kx - pad;
                        for (int ox = rx.lo; ox <= rx.hi; ++ox) {
                            orow[ox] += wv * irow[ox * s + off];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_backward(const Tensor<T>& in, const Tensor<T>& d_out, const LayerSpec& spec,
                   const LayerWeights<T>& lw, Tensor<T>& d_in, LayerWeights<T>* d_lw) {
    const int k = spec.kernel, s = spec.stride, pad = (k - 1) / 2;
    const int oc_n = spec.out_channels, ic_n = in.ch;
    d_in = Tensor<T>(in.ch, in.h, in.w);
    if (d_lw) {
        d_lw->w.assign(lw.w.size(), T(0));
        d_lw->b.assign(lw.b.size(), T(0));
    }
    for (int oc = 0; oc < oc_n; ++oc) {
        if (d_lw) {
            const T* gplane = &d_out.data[static_cast<size_t>(oc) * d_out.h * d_out.w];
            T acc = T(0);
            for (size_t i = 0; i < static_cast<size_t>(d_out.h) * d_out.w; ++i) acc += gplane[i];
            d_lw->b[oc] += acc;
        }
        for (int ic = 0; ic < ic_n; ++ic) {
            const T* wbase = &lw.w[((static_cast<size_t>(oc) * ic_n) + ic) * k * k];
            T* dwbase = d_lw ? &d_lw->w[((static_cast<size_t>(oc) * ic_n) + ic) * k * k] : nullptr;
            for (int ky = 0; ky < k; ++ky) {
                const Range ry = tap_range(d_out.h, in.h, s, ky - pad);
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = wbase[ky * k + kx];
                    const Range rx = tap_range(d_out.w, in.w, s, kx - pad);
                    const int off = kx - pad;
                    T wgrad = T(0);
                    for (int oy = ry.lo; oy <= ry.hi; ++oy) {
                        const int iy = oy * s + ky - pad;
                        const T* irow = &in.data[(static_cast<size_t>(ic) * in.h + iy) * in.w];
                        T* drow = &d_in.data[(static_cast<size_t>(ic) * in.h + iy) * in.w];
                        const T* grow = &d_out.data[(static_cast<size_t>(oc) * d_out.h + oy) * d_out.w];
                        for (int ox = rx.lo; ox <= rx.hi; ++ox) {
                            const T g = grow[ox];
                            drow[ox * s + off] += wv * g;
                            wgrad += g * irow[ox * s + off];
                        }
                    }
                    if (dwbase) dwbase[ky * k + kx] += wgrad;
                }
            }
        }
    }
}

}  // namespace

template <typename T>
NetCache<T> Network<T>::forward(const Tensor<T>& input) const {
    if (input.ch != in_ch) throw std::invalid_argument("forward: input channel mismatch");
    NetCache<T> cache;
    cache.input = input;
    cache.outputs.resize(layers.size());
    cache.pool_argmax.resize(layers.size());

    const Tensor<T>* cur = &cache.input;
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& spec = layers[i];
        const LayerWeights<T>& lw = weights[i];
        Tensor<T>& out = cache.outputs[i];
        switch (spec.kind) {
            case LayerKind::Conv: conv_forward(*cur, spec, lw, out); break;
            case LayerKind::BatchNormInference: {
                out = *cur;
                for (int c = 0; c < cur->ch; ++c) {
                    const T scale =
                        lw.gamma[c] / static_cast<T>(std::sqrt(static_cast<double>(lw.var[c]) + kBnEps));
                    const T shift = lw.beta[c] - lw.mean[c] * scale;
                    T* plane = &out.data[static_cast<size_t>(c) * out.h * out.w];
                    for (size_t j = 0; j < static_cast<size_t>(out.h) * out.w; ++j) {
                        plane[j] = plane[j] * scale + shift;
                    }
                }
                break;
            }
            case LayerKind::ReLU: {
                out = *cur;
                for (T& v : out.data) v = v > T(0) ? v : T(0);
                break;
            }
            case LayerKind::MaxPool: {
                if (cur->h % 2 != 0 || cur->w % 2 != 0) {
                    throw std::invalid_argument("MaxPool: odd input dims");
                }
                out = Tensor<T>(cur->ch, cur->h / 2, cur->w / 2);
                cache.pool_argmax[i].resize(out.size());
                for (int c = 0; c < cur->ch; ++c) {
                    for (int y = 0; y < out.h; ++y) {
                        for (int x = 0; x < out.w; ++x) {
                            T best = cur->at(c, 2 * y, 2 * x);
                            int bidx = ((c * cur->h + 2 * y) * cur->w + 2 * x);
                            for (int dy = 0; dy < 2; ++dy) {
                                for (int dx = 0; dx < 2; ++dx) {
                                    const T v = cur->at(c, 2 * y + dy, 2 * x + dx);
                                    if (v > best) {
                                        best = v;
                                        bidx = ((c * cur->h + 2 * y + dy) * cur->w + 2 * x + dx);
                                    }
                                }
                            }
                            out.at(c, y, x) = best;
                            cache.pool_argmax[i][(static_cast<size_t>(c) * out.h + y) * out.w + x] =
                                bidx;
                        }
                    }
                }
                break;
            }
            case LayerKind::UpSample: {
                out = Tensor<T>(cur->ch, cur->h * 2, cur->w * 2);
                for (int c = 0; c < cur->ch; ++c) {
                    for (int y = 0; y < out.h; ++y) {
                        const T* irow = &cur->data[(static_cast<size_t>(c) * cur->h + y / 2) * cur->w];
                        T* orow = &out.data[(static_cast<size_t>(c) * out.h + y) * out.w];
                        for (int x = 0; x < out.w; ++x) orow[x] = irow[x / 2];
                    }
                }
                break;
            }
            case LayerKind::Concat: {
                const Tensor<T>& src = cache.outputs[spec.concat_src];
                if (src.h != cur->h || src.w != cur->w) {
                    throw std::invalid_argument("Concat: spatial shape mismatch");
                }
                out = Tensor<T>(cur->ch + src.ch, cur->h, cur->w);
                std::copy(cur->data.begin(), cur->data.end(), out.data.begin());
                std::copy(src.data.begin(), src.data.end(),
                          out.data.begin() + static_cast<std::ptrdiff_t>(cur->size()));
                break;
            }
            case LayerKind::Dense: {
                const size_t in_dim = lw.w.size() / spec.out_dim;
                if (cur->size() != in_dim) {
                    throw std::invalid_argument("Dense: input size mismatch");
                }
                out = Tensor<T>(spec.out_dim, 1, 1);
                for (int o = 0; o < spec.out_dim; ++o) {
                    const T* wrow = &lw.w[static_cast<size_t>(o) * in_dim];
                    T acc = lw.b[o];
                    for (size_t j = 0; j < in_dim; ++j) acc += wrow[j] * cur->data[j];
                    out.data[o] = acc;
                }
                break;
            }
            case LayerKind::SoftmaxCrossEntropy: {
                out = *cur;
                T mx = out.data[0];
                for (T v : out.data) mx = std::max(mx, v);
                double sum = 0.0;
                for (T& v : out.data) {
                    v = static_cast<T>(std::exp(static_cast<double>(v - mx)));
                    sum += static_cast<double>(v);
                }
                for (T& v : out.data) v = static_cast<T>(static_cast<double>(v) / sum);
                break;
            }
        }
        cur = &out;
    }
    return cache;
}

template <typename T>
NetGrads<T> Network<T>::backward(const NetCache<T>& cache, const Tensor<T>& d_output,
                                 bool want_weight_grads) const {
    const int last = output_layer();
    if (!cache.outputs[last].same_shape(d_output)) {
        throw std::invalid_argument("backward: upstream shape does not match cache");
    }
    NetGrads<T> result;
    if (want_weight_grads) result.weights.assign(layers.size(), {});

    std::vector<Tensor<T>> grads(layers.size());
    grads[last] = d_output;
    for (int i = last; i >= 0; --i) {
        const LayerSpec& spec = layers[i];
        const LayerWeights<T>& lw = weights[i];
        const Tensor<T>& in = (i == 0) ? cache.input : cache.outputs[i - 1];
        const Tensor<T>& g = grads[i];
        if (g.size() == 0) continue;  // unused branch

        Tensor<T> d_in;
        switch (spec.kind) {
            case LayerKind::Conv:
                conv_backward(in, g, spec, lw, d_in,
                              want_weight_grads ? &result.weights[i] : nullptr);
                break;
            case LayerKind::BatchNormInference: {
                d_in = Tensor<T>(in.ch, in.h, in.w);
                if (want_weight_grads) {
                    result.weights[i].gamma.assign(lw.gamma.size(), T(0));
                    result.weights[i].beta.assign(lw.beta.size(), T(0));
                    result.weights[i].mean.assign(lw.mean.size(), T(0));
                    result.weights[i].var.assign(lw.var.size(), T(0));
                }
                for (int c = 0; c < in.ch; ++c) {
                    const double inv_std = 1.0 / std::sqrt(static_cast<double>(lw.var[c]) + kBnEps);
                    const T scale = static_cast<T>(static_cast<double>(lw.gamma[c]) * inv_std);
                    const size_t plane = static_cast<size_t>(in.h) * in.w;
                    const T* gp = &g.data[c * plane];
                    const T* ip = &in.data[c * plane];
                    T* dp = &d_in.data[c * plane];
                    T dgamma = T(0), dbeta = T(0);
                    for (size_t j = 0; j < plane; ++j) {
                        dp[j] = gp[j] * scale;
                        dgamma += gp[j] * static_cast<T>((static_cast<double>(ip[j]) -
                                                          static_cast<double>(lw.mean[c])) *
                                                         inv_std);
                        dbeta += gp[j];
                    }
                    if (want_weight_grads) {
                        result.weights[i].gamma[c] = dgamma;
                        result.weights[i].beta[c] = dbeta;
                    }
                }
                break;
            }
            case LayerKind::ReLU: {
                d_in = Tensor<T>(in.ch, in.h, in.w);
                for (size_t j = 0; j < in.size(); ++j) {
                    d_in.data[j] = in.data[j] > T(0) ? g.data[j] : T(0);
                }
                break;
            }
            case LayerKind::MaxPool: {
                d_in = Tensor<T>(in.ch, in.h, in.w);
                const auto& arg = cache.pool_argmax[i];
                for (size_t j = 0; j < g.size(); ++j) d_in.data[arg[j]] += g.data[j];
                break;
            }
            case LayerKind::UpSample: {
                d_in = Tensor<T>(in.ch, in.h, in.w);
                for (int c = 0; c < g.ch; ++c) {
                    for (int y = 0; y < g.h; ++y) {
                        const T* grow = &g.data[(static_cast<size_t>(c) * g.h + y) * g.w];
                        T* drow = &d_in.data[(static_cast<size_t>(c) * in.h + y / 2) * in.w];
                        for (int x = 0; x < g.w; ++x) drow[x / 2] += grow[x];
                    }
                }
                break;
            }
            case LayerKind::Concat: {
                const Tensor<T>& src = cache.outputs[spec.concat_src];
                d_in = Tensor<T>(in.ch, in.h, in.w);
                std::copy(g.data.begin(), g.data.begin() + static_cast<std::ptrdiff_t>(in.size()),
                          d_in.data.begin());
                Tensor<T>& srcg = grads[spec.concat_src];
                if (srcg.size() == 0) srcg = Tensor<T>(src.ch, src.h, src.w);
                const T* tail = g.data.data() + in.size();
                for (size_t j = 0; j < src.size(); ++j) srcg.data[j] += tail[j];
                break;
            }
            case LayerKind::Dense: {
                const size_t in_dim = lw.w.size() / spec.out_dim;
                d_in = Tensor<T>(in.ch, in.h, in.w);
                if (want_weight_grads) {
                    result.weights[i].w.assign(lw.w.size(), T(0));
                    result.weights[i].b.assign(lw.b.size(), T(0));
                }
                for (int o = 0; o < spec.out_dim; ++o) {
                    const T go = g.data[o];
                    const T* wrow = &lw.w[static_cast<size_t>(o) * in_dim];
                    for (size_t j = 0; j < in_dim; ++j) d_in.data[j] += wrow[j] * go;
                    if (want_weight_grads) {
                        T* dwrow = &result.weights[i].w[static_cast<size_t>(o) * in_dim];
                        for (size_t j = 0; j < in_dim; ++j) dwrow[j] += go * in.data[j];
                        result.weights[i].b[o] += go;
                    }
                }
                break;
            }
            case LayerKind::SoftmaxCrossEntropy:
                throw std::logic_error("backward reached a loss head");
        }
        if (i == 0) {
            result.d_input = std::move(d_in);
        } else {
            Tensor<T>& dst = grads[i - 1];
            if (dst.size() == 0) {
                dst = std::move(d_in);
            } else {
                for (size_t j = 0; j < dst.size(); ++j) dst.data[j] += d_in.data[j];
            }
        }
        grads[i] = Tensor<T>();  // release
    }
    return result;
}

// ---------------------------------------------------------------------------
// weight (de)serialization

namespace {

std::string layer_prefix(size_t i) { return "layer" + std::to_string(i) + "."; }

template <typename T>
void put_array(WeightStore& store, const std::string& name, const std::vector<T>& v,
               std::vector<uint32_t> dims) {
    WeightEntry e;
    e.dims = std::move(dims);
    e.values.reserve(v.size());
    for (T x : v) e.values.push_back(static_cast<float>(x));
    if (e.element_count() != e.values.size()) {
        throw std::logic_error("put_array: dims do not match value count");
    }
    store.entries.emplace(name, std::move(e));
}

template <typename T>
void take_array(const WeightStore& store, const std::string& name, std::vector<T>& v) {
    const WeightEntry& e = store.get(name);
    if (e.values.size() != v.size()) {
        throw std::runtime_error("weights: entry '" + name + "' has wrong size");
    }
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(e.values[i]);
}

}  // namespace

template <typename T>
WeightStore Network<T>::export_weights() const {
    WeightStore store;
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& spec = layers[i];
        const LayerWeights<T>& lw = weights[i];
        const std::string pre = layer_prefix(i);
        if (spec.kind == LayerKind::Conv) {
            put_array(store, pre + "w", lw.w,
                      {static_cast<uint32_t>(spec.out_channels),
                       static_cast<uint32_t>(layer_in_channels[i]),
                       static_cast<uint32_t>(spec.kernel), static_cast<uint32_t>(spec.kernel)});
            put_array(store, pre + "b", lw.b, {static_cast<uint32_t>(spec.out_channels)});
        } else if (spec.kind == LayerKind::Dense) {
            put_array(store, pre + "w", lw.w,
                      {static_cast<uint32_t>(spec.out_dim),
                       static_cast<uint32_t>(lw.w.size() / spec.out_dim)});
            put_array(store, pre + "b", lw.b, {static_cast<uint32_t>(spec.out_dim)});
        } else if (spec.kind == LayerKind::BatchNormInference) {
            put_array(store, pre + "gamma", lw.gamma, {static_cast<uint32_t>(lw.gamma.size())});
            put_array(store, pre + "beta", lw.beta, {static_cast<uint32_t>(lw.beta.size())});
            put_array(store, pre + "mean", lw.mean, {static_cast<uint32_t>(lw.mean.size())});
            put_array(store, pre + "var", lw.var, {static_cast<uint32_t>(lw.var.size())});
        }
    }
    return store;
}

template <typename T>
void Network<T>::import_weights(const WeightStore& store) {
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& spec = layers[i];
        LayerWeights<T>& lw = weights[i];
        const std::string pre = layer_prefix(i);
        if (spec.kind == LayerKind::Conv || spec.kind == LayerKind::Dense) {
            take_array(store, pre + "w", lw.w);
            take_array(store, pre + "b", lw.b);
        } else if (spec.kind == LayerKind::BatchNormInference) {
            take_array(store, pre + "gamma", lw.gamma);
            take_array(store, pre + "beta", lw.beta);
            take_array(store, pre + "mean", lw.mean);
            take_array(store, pre + "var", lw.var);
        }
    }
}

template <typename T>
size_t Network<T>::parameter_count() const {
    size_t n = 0;
    for (const auto& lw : weights) {
        n += lw.w.size() + lw.b.size() + lw.gamma.size() + lw.beta.size() + lw.mean.size() +
             lw.var.size();
    }
    return n;
}

template <typename T>
void adam_step(Network<T>& net, const std::vector<LayerWeights<T>>& grads, AdamState& state,
               double lr) {
    if (grads.size() != net.weights.size()) {
        throw std::invalid_argument("adam_step: gradient list does not match network");
    }
    state.begin_step();
    for (size_t i = 0; i < net.weights.size(); ++i) {
        LayerWeights<T>& lw = net.weights[i];
        const LayerWeights<T>& g = grads[i];
        const size_t base = i * 4;
        if (!lw.w.empty() && !g.w.empty()) {
            state.update(base + 0, lw.w.data(), g.w.data(), lw.w.size(), lr);
            state.update(base + 1, lw.b.data(), g.b.data(), lw.b.size(), lr);
        }
        if (!lw.gamma.empty() && !g.gamma.empty()) {
            state.update(base + 2, lw.gamma.data(), g.gamma.data(), lw.gamma.size(), lr);
            state.update(base + 3, lw.beta.data(), g.beta.data(), lw.beta.size(), lr);
        }
    }
}

template <typename T>
CeResult<T> softmax_cross_entropy(const std::vector<T>& logits, int label) {
    if (label < 0 || label >= static_cast<int>(logits.size())) {
        throw std::invalid_argument("softmax_cross_entropy: label out of range");
    }
    CeResult<T> r;
    const int n = static_cast<int>(logits.size());
    double mx = static_cast<double>(logits[0]);
    for (T v : logits) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    std::vector<double> ex(n);
    for (int i = 0; i < n; ++i) {
        ex[i] = std::exp(static_cast<double>(logits[i]) - mx);
        sum += ex[i];
    }
    r.loss = std::log(sum) - (static_cast<double>(logits[label]) - mx);
    r.probs.resize(n);
    r.d_logits.resize(n);
    for (int i = 0; i < n; ++i) {
        const double p = ex[i] / sum;
        r.probs[i] = static_cast<T>(p);
        r.d_logits[i] = static_cast<T>(p - (i == label ? 1.0 : 0.0));
    }
    return r;
}

template <typename T>
int argmax_index(const std::vector<T>& v) {
    int arg = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v[i] > v[arg]) arg = i;  // ties keep the lowest index
    }
    return arg;
}

template <typename T>
Network<T> make_victim_network(int num_classes, int in_h, int in_w) {
    Network<T> net;
    net.build(
        {
            LayerSpec::conv(16, 3, 1),
            LayerSpec::relu(),
            LayerSpec::max_pool(),
            LayerSpec::conv(32, 3, 1),
            LayerSpec::relu(),
            LayerSpec::max_pool(),
            LayerSpec::dense(num_classes),
            LayerSpec::softmax_cross_entropy(),
        },
        3, in_h, in_w);
    return net;
}

template <typename T>
Network<T> make_style_unet(int base_width) {
    const int c1 = base_width, c2 = base_width * 2, c3 = base_width * 4;
    Network<T> net;
    net.build(
        {
            LayerSpec::conv(c1, 3, 1),  // 0
            LayerSpec::relu(),          // 1  skip A
            LayerSpec::max_pool(),      // 2
            LayerSpec::conv(c2, 3, 1),  // 3
            LayerSpec::relu(),          // 4  skip B
            LayerSpec::max_pool(),      // 5
            LayerSpec::conv(c3, 3, 1),  // 6
            LayerSpec::relu(),          // 7
            LayerSpec::up_sample(),     // 8
            LayerSpec::concat(4),       // 9
            LayerSpec::conv(c2, 3, 1),  // 10
            LayerSpec::relu(),          // 11
            LayerSpec::up_sample(),     // 12
            LayerSpec::concat(1),       // 13
            LayerSpec::conv(c1, 3, 1),  // 14
            LayerSpec::relu(),          // 15
            LayerSpec::conv(1, 3, 1),   // 16 deviation map
        },
        3, 64, 64);
    return net;
}

template <typename T>
Tensor<T> image_to_tensor(const ImageTensor& img) {
    Tensor<T> t(3, img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                t.at(c, y, x) = static_cast<T>(img.at(y, x, c));
            }
        }
    }
    return t;
}

namespace {

template <typename T>
ImageTensor tensor_to_image_grad_impl(const Tensor<T>& t) {
    ImageTensor img(t.h, t.w, ColorState::NonlinearSRGB);
    for (int y = 0; y < t.h; ++y) {
        for (int x = 0; x < t.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(y, x, c) = static_cast<double>(t.at(c, y, x));
            }
        }
    }
    return img;
}

}  // namespace

ImageTensor tensor_to_image_grad(const Tensor<float>& t) { return tensor_to_image_grad_impl(t); }
ImageTensor tensor_to_image_grad(const Tensor<double>& t) { return tensor_to_image_grad_impl(t); }

template struct Tensor<float>;
template struct Tensor<double>;
template class Network<float>;
template class Network<double>;
template void adam_step(Network<float>&, const std::vector<LayerWeights<float>>&, AdamState&,
                        double);
template void adam_step(Network<double>&, const std::vector<LayerWeights<double>>&, AdamState&,
                        double);
template CeResult<float> softmax_cross_entropy(const std::vector<float>&, int);
template CeResult<double> softmax_cross_entropy(const std::vector<double>&, int);
template int argmax_index(const std::vector<float>&);
template int argmax_index(const std::vector<double>&);
template Network<float> make_victim_network(int, int, int);
template Network<double> make_victim_network(int, int, int);
template Network<float> make_style_unet(int);
template Network<double> make_style_unet(int);
template Tensor<float> image_to_tensor(const ImageTensor&);
template Tensor<double> image_to_tensor(const ImageTensor&);

}  // namespace retouch

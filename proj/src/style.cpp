#include "retouch/style.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "retouch/ops.hpp"
#include "retouch/optim.hpp"
#include "retouch/png_io.hpp"

namespace retouch {

namespace {

constexpr double kVarEps = 1e-12;

double hist_center(int channel, int bin) {
    const double lo = style_hist_lo(channel);
    const double width = (style_hist_hi(channel) - lo) / kStyleHistBins;
    return lo + (bin + 0.5) * width;
}

double hist_bandwidth(int channel) {
    return (style_hist_hi(channel) - style_hist_lo(channel)) / kStyleHistBins;
}

void soft_hist_weights(int channel, double z, std::array<double, kStyleHistBins>& w) {
    const double h = hist_bandwidth(channel);
    double sum = 0.0;
    for (int b = 0; b < kStyleHistBins; ++b) {
        const double d = (z - hist_center(channel, b)) / h;
        w[b] = std::exp(-0.5 * d * d);
        sum += w[b];
    }
    for (double& v : w) v /= sum;
}

void require_linear(const ImageTensor& img, const char* who) {
    if (img.state != ColorState::LinearSRGB) {
        throw std::invalid_argument(std::string(who) + ": image must be LinearSRGB");
    }
}

std::vector<Lab> image_lab_values(const ImageTensor& img) {
    std::vector<Lab> lab(img.pixel_count());
    for (size_t p = 0; p < lab.size(); ++p) {
        const double* x = &img.data[p * 3];
        lab[p] = rgb_to_lab(x[0], x[1], x[2]);
    }
    return lab;
}

std::array<ChannelStats, 3> stats_from_lab(const std::vector<Lab>& lab) {
    const double n = static_cast<double>(lab.size());
    std::array<ChannelStats, 3> stats{};
    for (const Lab& v : lab) {
        stats[0].mean += v.L;
        stats[1].mean += v.a;
        stats[2].mean += v.b;
    }
    for (auto& s : stats) s.mean /= n;
    std::array<double, kStyleHistBins> w{};
    for (const Lab& v : lab) {
        const double z[3] = {v.L, v.a, v.b};
        for (int c = 0; c < 3; ++c) {
            const double d = z[c] - stats[c].mean;
            stats[c].stddev += d * d;
            soft_hist_weights(c, z[c], w);
            for (int b = 0; b < kStyleHistBins; ++b) stats[c].hist[b] += w[b];
        }
    }
    for (auto& s : stats) {
        s.stddev = std::sqrt(s.stddev / n + kVarEps);
        for (double& hb : s.hist) hb /= n;
    }
    return stats;
}

std::vector<std::filesystem::path> sorted_pngs(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("style corpus: not a directory: " + dir);
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("style corpus: no .png files in " + dir);
    return files;
}

}  // namespace

double style_hist_lo(int channel) { return channel == 0 ? 0.0 : -110.0; }
double style_hist_hi(int channel) { return channel == 0 ? 100.0 : 110.0; }

std::array<ChannelStats, 3> image_lab_stats(const ImageTensor& linear_img) {
    require_linear(linear_img, "image_lab_stats");
    return stats_from_lab(image_lab_values(linear_img));
}

StyleReference build_reference_from_images(const std::vector<ImageTensor>& nonlinear_images) {
    if (nonlinear_images.empty()) throw std::runtime_error("style corpus: empty");
    StyleReference ref;
    ref.image_count = static_cast<int>(nonlinear_images.size());
    for (const ImageTensor& img : nonlinear_images) {
        std::array<ChannelStats, 3> s = image_lab_stats(srgb_to_linear(img));
        for (int c = 0; c < 3; ++c) {
            ref.lab[c].mean += s[c].mean;
            ref.lab[c].stddev += s[c].stddev;
            for (int b = 0; b < kStyleHistBins; ++b) ref.lab[c].hist[b] += s[c].hist[b];
        }
    }
    const double n = static_cast<double>(ref.image_count);
    for (auto& s : ref.lab) {
        s.mean /= n;
        s.stddev /= n;
        for (double& hb : s.hist) hb /= n;
    }
    return ref;
}

StyleReference build_reference(const std::string& corpus_dir) {
    std::vector<ImageTensor> imgs;
    for (const auto& p : sorted_pngs(corpus_dir)) imgs.push_back(load_png(p.string()));
    return build_reference_from_images(imgs);
}

void save_reference_json(const StyleReference& ref, const std::string& path) {
    nlohmann::json j;
    j["schema"] = 1;
    j["image_count"] = ref.image_count;
    nlohmann::json channels = nlohmann::json::array();
    for (int c = 0; c < 3; ++c) {
        nlohmann::json cj;
        cj["mean"] = ref.lab[c].mean;
        cj["stddev"] = ref.lab[c].stddev;
        cj["hist"] = ref.lab[c].hist;
        channels.push_back(cj);
    }
    j["channels"] = channels;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write style reference: " + path);
    out << j.dump(2) << "\n";
}

StyleReference load_reference_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read style reference: " + path);
    nlohmann::json j;
    in >> j;
    StyleReference ref;
    ref.image_count = j.at("image_count").get<int>();
    const auto& channels = j.at("channels");
    if (channels.size() != 3) throw std::runtime_error("style reference: need 3 channels");
    for (int c = 0; c < 3; ++c) {
        ref.lab[c].mean = channels[c].at("mean").get<double>();
        ref.lab[c].stddev = channels[c].at("stddev").get<double>();
        const auto& h = channels[c].at("hist");
        if (h.size() != kStyleHistBins) throw std::runtime_error("style reference: bad hist size");
        for (int b = 0; b < kStyleHistBins; ++b) ref.lab[c].hist[b] = h[b].get<double>();
    }
    return ref;
}

double statistic_style_loss(const ImageTensor& linear_img, const StyleReference& ref,
                            ImageTensor* d_img) {
    require_linear(linear_img, "statistic_style_loss");
    const std::vector<Lab> lab = image_lab_values(linear_img);
    const double n = static_cast<double>(lab.size());
    const std::array<ChannelStats, 3> stats = stats_from_lab(lab);

    double loss = 0.0;
    double g_mean[3], g_std[3];
    std::array<std::array<double, kStyleHistBins>, 3> g_hist{};
    for (int c = 0; c < 3; ++c) {
        const double dm = stats[c].mean - ref.lab[c].mean;
        const double ds = stats[c].stddev - ref.lab[c].stddev;
        loss += dm * dm + ds * ds;
        g_mean[c] = 2.0 * dm;
        g_std[c] = 2.0 * ds;
        for (int b = 0; b < kStyleHistBins; ++b) {
            const double dh = stats[c].hist[b] - ref.lab[c].hist[b];
            loss += kHistLossWeight * dh * dh;
            g_hist[c][b] = 2.0 * kHistLossWeight * dh;
        }
    }
    if (!d_img) return loss;

    *d_img = ImageTensor(linear_img.height, linear_img.width, linear_img.state);
    std::array<double, kStyleHistBins> w{};
    Mat3 jac;
    for (size_t p = 0; p < lab.size(); ++p) {
        const double* x = &linear_img.data[p * 3];
        rgb_to_lab_jac(x[0], x[1], x[2], jac);
        const double z[3] = {lab[p].L, lab[p].a, lab[p].b};
        double d_lab[3];
        for (int c = 0; c < 3; ++c) {
            double g = g_mean[c] / n;
            g += g_std[c] * (z[c] - stats[c].mean) / (n * stats[c].stddev);
            // soft-histogram VJP
            soft_hist_weights(c, z[c], w);
            const double h = hist_bandwidth(c);
            double s = 0.0;
            for (int b = 0; b < kStyleHistBins; ++b) {
                s += w[b] * (hist_center(c, b) - z[c]) / (h * h);
            }
            double gh = 0.0;
            for (int b = 0; b < kStyleHistBins; ++b) {
                gh += g_hist[c][b] * w[b] * ((hist_center(c, b) - z[c]) / (h * h) - s);
            }
            g += gh / n;
            d_lab[c] = g;
        }
        for (int c = 0; c < 3; ++c) {
            d_img->data[p * 3 + c] =
                d_lab[0] * jac(0, c) + d_lab[1] * jac(1, c) + d_lab[2] * jac(2, c);
        }
    }
    return loss;
}

double predictor_style_loss(const ImageTensor& linear_img, const Network<double>& predictor,
                            ImageTensor* d_img) {
    require_linear(linear_img, "predictor_style_loss");
    Tensor<double> input = image_to_tensor<double>(linear_img);
    NetCache<double> cache = predictor.forward(input);
    const Tensor<double>& map = predictor.output(cache);
    if (map.ch != 1 || map.h != linear_img.height || map.w != linear_img.width) {
        throw std::invalid_argument("predictor_style_loss: deviation map shape mismatch");
    }
    const double inv_n = 1.0 / static_cast<double>(map.size());
    double loss = 0.0;
    for (double v : map.data) loss += v > 0.0 ? v : 0.0;
    loss *= inv_n;
    if (!d_img) return loss;

    Tensor<double> d_map(map.ch, map.h, map.w);
    for (size_t i = 0; i < map.size(); ++i) d_map.data[i] = map.data[i] > 0.0 ? inv_n : 0.0;
    NetGrads<double> grads = predictor.backward(cache, d_map, /*want_weight_grads=*/false);
    *d_img = tensor_to_image_grad(grads.d_input);
    d_img->state = linear_img.state;
    return loss;
}

double StyleGuide::evaluate(const ImageTensor& linear_img, ImageTensor* d_img) const {
    return kind == StyleLossKind::Statistic ? statistic_style_loss(linear_img, reference, d_img)
                                            : predictor_style_loss(linear_img, predictor, d_img);
}

std::vector<double> deviation_map(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("deviation_map: shape mismatch");
    std::vector<double> map(a.pixel_count());
    for (size_t p = 0; p < map.size(); ++p) {
        double acc = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double d = a.data[p * 3 + c] - b.data[p * 3 + c];
            acc += d * d;
        }
        map[p] = std::sqrt(acc);
    }
    return map;
}

ImageTensor random_retouch(const ImageTensor& linear_img, int chain_length, Rng& rng,
                           bool neutral_params) {
    ImageTensor out = linear_img;
    for (int i = 0; i < chain_length; ++i) {
        const OpKind kind = static_cast<OpKind>(rng.index(kNumOpKinds));
        const OpKindInfo& info = op_kind_info(kind);
        OpParams p;
        p.kind = kind;
        p.values.resize(info.param_dim);
        for (double& v : p.values) {
            v = neutral_params ? info.neutral : rng.uniform(info.lo, info.hi);
        }
        out = apply_op(out, p);
    }
    return out;
}

StyleTrainResult train_style_predictor(const std::vector<ImageTensor>& nonlinear_corpus,
                                       const StyleTrainConfig& config) {
    if (nonlinear_corpus.empty()) throw std::runtime_error("train_style_predictor: empty corpus");
    std::vector<ImageTensor> linear;
    linear.reserve(nonlinear_corpus.size());
    for (const ImageTensor& img : nonlinear_corpus) linear.push_back(srgb_to_linear(img));

    Network<float> net = make_style_unet<float>(config.base_width);
    Rng rng(config.seed);
    net.init_weights(rng);
    AdamState adam;

    StyleTrainResult result;
    result.epoch_losses.reserve(config.epochs);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const ImageTensor& orig : linear) {
            const ImageTensor retouched =
                random_retouch(orig, config.chain_length, rng, config.neutral_params);
            const std::vector<double> target = deviation_map(retouched, orig);

            Tensor<float> input = image_to_tensor<float>(retouched);
            NetCache<float> cache = net.forward(input);
            const Tensor<float>& map = net.output(cache);
            const float inv_n = 1.0f / static_cast<float>(map.size());
            Tensor<float> d_map(map.ch, map.h, map.w);
            double loss = 0.0;
            for (size_t i = 0; i < map.size(); ++i) {
                const float diff = map.data[i] - static_cast<float>(target[i]);
                loss += static_cast<double>(diff) * diff;
                d_map.data[i] = 2.0f * diff * inv_n;
            }
            loss /= static_cast<double>(map.size());
            epoch_loss += loss;

            NetGrads<float> grads = net.backward(cache, d_map, /*want_weight_grads=*/true);
            adam_step(net, grads.weights, adam, config.lr);
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(linear.size()));
    }
    result.weights = net.export_weights();
    return result;
}

StyleTrainResult train_style_predictor(const std::string& corpus_dir,
                                       const StyleTrainConfig& config) {
    std::vector<ImageTensor> imgs;
    for (const auto& p : sorted_pngs(corpus_dir)) imgs.push_back(load_png(p.string()));
    return train_style_predictor(imgs, config);
}

Network<double> load_style_predictor(const WeightStore& store) {
    const WeightEntry& first = store.get("layer0.w");
    if (first.dims.empty()) throw std::runtime_error("style predictor: malformed weights");
    Network<double> net = make_style_unet<double>(static_cast<int>(first.dims[0]));
    net.import_weights(store);
    return net;
}

}  // namespace retouch

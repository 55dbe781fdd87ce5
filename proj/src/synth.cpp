#include "retouch/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "retouch/optim.hpp"
#include "retouch/png_io.hpp"
#include "retouch/rng.hpp"

namespace retouch {

namespace {

const char* kClassNames[kNumShapeClasses] = {"circle", "square", "triangle", "cross", "ring"};

double class_hue_deg(int label) { return label * (360.0 / kNumShapeClasses); }

double rect_sdf(double dx, double dy, double half_w, double half_h) {
    return std::max(std::abs(dx) - half_w, std::abs(dy) - half_h);
}

// signed distance (negative inside) for one rendered shape
double shape_sdf(int label, double dx, double dy, double radius) {
    switch (label) {
        case 0:  // circle
            return std::hypot(dx, dy) - radius;
        case 1:  // square
            return rect_sdf(dx, dy, radius * 0.82, radius * 0.82);
        case 2: {  // upright triangle: max of three half-plane distances
            const double hx = radius * 0.95, hy = radius * 0.75;
            const double ax = 0.0, ay = -radius;  // apex (y grows downward)
            auto edge = [&](double px, double py, double qx, double qy) {
                const double ex = qx - px, ey = qy - py;
                return ((dx - px) * ey - (dy - py) * ex) / std::hypot(ex, ey);
            };
            double d = edge(ax, ay, hx, hy);
            d = std::max(d, edge(hx, hy, -hx, hy));
            d = std::max(d, edge(-hx, hy, ax, ay));
            return d;
        }
        case 3: {  // cross
            const double arm = radius * 0.36;
            return std::min(rect_sdf(dx, dy, radius, arm), rect_sdf(dx, dy, arm, radius));
        }
        default:  // ring
            return std::abs(std::hypot(dx, dy) - radius * 0.8) - radius * 0.3;
    }
}

struct Rgb {
    double r, g, b;
};

Rgb from_hsv_deg(double hue_deg, double s, double v) {
    double h = hue_deg * M_PI / 180.0;
    h = std::fmod(h, 2.0 * M_PI);
    if (h < 0) h += 2.0 * M_PI;
    Rgb c{};
    hsv_to_rgb(h, s, v, c.r, c.g, c.b);
    return c;
}

std::filesystem::path manifest_path(const std::string& dir) {
    return std::filesystem::path(dir) / "manifest.json";
}

std::vector<ManifestEntry> split_entries(const std::string& data_dir, const std::string& split) {
    std::vector<ManifestEntry> all = load_manifest(manifest_path(data_dir).string());
    std::vector<ManifestEntry> out;
    for (auto& e : all) {
        if (e.split == split) out.push_back(std::move(e));
    }
    if (out.empty()) {
        throw std::runtime_error("dataset " + data_dir + " has no '" + split + "' split");
    }
    return out;
}

struct LoadedSplit {
    std::vector<Tensor<float>> images;
    std::vector<int> labels;
};

LoadedSplit load_split(const std::string& data_dir, const std::string& split) {
    LoadedSplit out;
    for (const ManifestEntry& e : split_entries(data_dir, split)) {
        const auto path = std::filesystem::path(data_dir) / e.file;
        out.images.push_back(image_to_tensor<float>(load_png(path.string())));
        out.labels.push_back(e.label);
    }
    return out;
}

int predict(const Network<float>& net, const Tensor<float>& img) {
    NetCache<float> cache = net.forward(img);
    return argmax_index(net.output(cache).data);
}

double split_accuracy(const Network<float>& net, const LoadedSplit& split) {
    int hits = 0;
    for (size_t i = 0; i < split.images.size(); ++i) {
        if (predict(net, split.images[i]) == split.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(split.images.size());
}

void accumulate_grads(std::vector<LayerWeights<float>>& acc,
                      const std::vector<LayerWeights<float>>& g) {
    auto add = [](std::vector<float>& dst, const std::vector<float>& src) {
        if (dst.empty()) {
            dst = src;
            return;
        }
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    if (acc.empty()) acc.resize(g.size());
    for (size_t i = 0; i < g.size(); ++i) {
        add(acc[i].w, g[i].w);
        add(acc[i].b, g[i].b);
        add(acc[i].gamma, g[i].gamma);
        add(acc[i].beta, g[i].beta);
    }
}

void scale_grads(std::vector<LayerWeights<float>>& acc, float s) {
    for (auto& lw : acc) {
        for (float& v : lw.w) v *= s;
        for (float& v : lw.b) v *= s;
        for (float& v : lw.gamma) v *= s;
        for (float& v : lw.beta) v *= s;
    }
}

}  // namespace

const char* shape_class_name(int label) {
    if (label < 0 || label >= kNumShapeClasses) throw std::invalid_argument("bad class label");
    return kClassNames[label];
}

ImageTensor render_shape_image(int size, int label, double fg_hue_deg, double bg_hue_deg,
                               Rng& rng) {
    const Rgb bg = from_hsv_deg(bg_hue_deg, rng.uniform(0.25, 0.5), rng.uniform(0.35, 0.7));
    const Rgb fg = from_hsv_deg(fg_hue_deg, rng.uniform(0.75, 1.0), rng.uniform(0.65, 0.95));
    const double cx = size * (0.5 + rng.uniform(-0.08, 0.08));
    const double cy = size * (0.5 + rng.uniform(-0.08, 0.08));
    const double radius = size * 0.5 * rng.uniform(0.55, 0.8);
    const double edge = 1.2;  // anti-alias ramp in pixels

    ImageTensor img(size, size, ColorState::NonlinearSRGB);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double sdf = shape_sdf(label, x + 0.5 - cx, y + 0.5 - cy, radius);
            const double alpha = clamp01(0.5 - sdf / (2.0 * edge));
            img.at(y, x, 0) = bg.r + (fg.r - bg.r) * alpha;
            img.at(y, x, 1) = bg.g + (fg.g - bg.g) * alpha;
            img.at(y, x, 2) = bg.b + (fg.b - bg.b) * alpha;
        }
    }
    return img;
}

std::vector<ManifestEntry> generate_dataset(const SyntheticDatasetSpec& spec,
                                            const std::string& out_dir) {
    if (spec.train_count < kNumShapeClasses || spec.test_count < 0 || spec.image_size < 8 ||
        spec.color_shortcut_rho < 0.0 || spec.color_shortcut_rho > 1.0) {
        throw std::invalid_argument("generate_dataset: invalid spec");
    }
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) {
        throw std::runtime_error("generate_dataset: cannot create directory " + out_dir);
    }

    Rng rng(spec.seed);
    std::vector<ManifestEntry> manifest;
    auto emit_split = [&](const char* split, int count, int start_index) {
        for (int i = 0; i < count; ++i) {
            const int label = i % kNumShapeClasses;
            const bool shortcut = rng.uniform() < spec.color_shortcut_rho;
            double fg_hue, bg_hue;
            if (shortcut) {
                fg_hue = class_hue_deg(label) + rng.uniform(-14.0, 14.0);
                bg_hue = class_hue_deg(label) + 180.0 + rng.uniform(-20.0, 20.0);
            } else {
                fg_hue = rng.uniform(0.0, 360.0);
                bg_hue = rng.uniform(0.0, 360.0);
            }
            ImageTensor img = render_shape_image(spec.image_size, label, fg_hue, bg_hue, rng);
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%05d.png", split, start_index + i);
            save_png(img, (fs::path(out_dir) / name).string());
            manifest.push_back({name, label, split, fg_hue});
        }
    };
    emit_split("train", spec.train_count, 0);
    emit_split("test", spec.test_count, 0);
    save_manifest(manifest, manifest_path(out_dir).string());
    return manifest;
}

void save_manifest(const std::vector<ManifestEntry>& manifest, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const ManifestEntry& e : manifest) {
        j.push_back({{"file", e.file},
                     {"label", e.label},
                     {"split", e.split},
                     {"fg_hue_deg", e.fg_hue_deg}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(1) << "\n";
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest: " + path);
    nlohmann::json j;
    in >> j;
    std::vector<ManifestEntry> manifest;
    for (const auto& e : j) {
        ManifestEntry m;
        m.file = e.at("file").get<std::string>();
        m.label = e.at("label").get<int>();
        m.split = e.at("split").get<std::string>();
        m.fg_hue_deg = e.value("fg_hue_deg", 0.0);
        manifest.push_back(std::move(m));
    }
    return manifest;
}

VictimTrainResult train_victim(const std::string& data_dir, const VictimTrainConfig& config) {
    if (config.epochs < 1 || config.lr <= 0.0 || config.batch_size < 1) {
        throw std::invalid_argument("train_victim: invalid config");
    }
    LoadedSplit train = load_split(data_dir, "train");
    LoadedSplit test = load_split(data_dir, "test");
    const int size = train.images[0].h;

    Network<float> net = make_victim_network<float>(kNumShapeClasses, size, size);
    Rng rng(config.seed);
    net.init_weights(rng);
    AdamState adam;

    VictimTrainResult result;
    std::vector<size_t> order(train.images.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with the run's own rng keeps shuffles reproducible
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.index(i)]);
        }
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<LayerWeights<float>> batch_grads;
            for (size_t bi = start; bi < stop; ++bi) {
                const Tensor<float>& img = train.images[order[bi]];
                const int label = train.labels[order[bi]];
                NetCache<float> cache = net.forward(img);
                CeResult<float> ce = softmax_cross_entropy(net.output(cache).data, label);
                epoch_loss += ce.loss;
                Tensor<float> seed(static_cast<int>(ce.d_logits.size()), 1, 1);
                seed.data = ce.d_logits;
                NetGrads<float> g = net.backward(cache, seed, /*want_weight_grads=*/true);
                accumulate_grads(batch_grads, g.weights);
            }
            scale_grads(batch_grads, 1.0f / static_cast<float>(stop - start));
            adam_step(net, batch_grads, adam, config.lr);
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    result.train_accuracy = split_accuracy(net, train);
    result.test_accuracy = split_accuracy(net, test);
    result.weights = net.export_weights();
    return result;
}

EvalResult evaluate_victim(const WeightStore& weights, const std::string& data_dir,
                           const std::string& split) {
    LoadedSplit data = load_split(data_dir, split);
    const int size = data.images[0].h;
    Network<float> net = make_victim_network<float>(kNumShapeClasses, size, size);
    net.import_weights(weights);

    EvalResult result;
    result.count = static_cast<int>(data.images.size());
    int hits = 0;
    for (size_t i = 0; i < data.images.size(); ++i) {
        const int pred = predict(net, data.images[i]);
        result.confusion[data.labels[i]][pred] += 1;
        if (pred == data.labels[i]) ++hits;
    }
    result.accuracy = static_cast<double>(hits) / static_cast<double>(result.count);
    return result;
}

Network<double> load_victim(const WeightStore& store, int image_size) {
    Network<double> net = make_victim_network<double>(kNumShapeClasses, image_size, image_size);
    net.import_weights(store);
    return net;
}

}  // namespace retouch

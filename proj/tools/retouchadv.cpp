// retouchadv: retouching-based adversarial attack workflows.
//
// Subcommands: gen-data, train-victim, build-style-ref, train-style,
// attack, eval, report. All structured output is JSON; exit codes are
// 0 (ok), 1 (runtime failure), 2 (usage error).

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "retouch/attack.hpp"
#include "retouch/png_io.hpp"
#include "retouch/style.hpp"
#include "retouch/synth.hpp"
#include "retouch/weights.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace retouch;

namespace {

// invalid flag combinations discovered after parsing (exit code 2)
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Outputs are staged next to the target and renamed into place so a failed
// run never leaves a partial PNG/JSON behind.
void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << text;
    }
    fs::rename(tmp, path);
}

void save_png_atomic(const ImageTensor& img, const std::string& path) {
    const std::string tmp = path + ".tmp";
    save_png(img, tmp);
    fs::rename(tmp, path);
}

struct AttackCliOptions {
    std::string image, victim_path, style_ref_path, style_predictor_path, out_path, report_path;
    std::string split = "test";
    int label = -1;
    AttackConfig config;
    int jobs = 1;
    bool disable_style = false, disable_drm = false;
};

json report_json(const AttackCliOptions& opt, const std::string& input_path, int label,
                 const AttackResult& result, double wall_ms) {
    json losses;
    losses["task"] = json::array();
    losses["style"] = json::array();
    losses["drm"] = json::array();
    losses["success"] = json::array();
    for (const IterationRecord& r : result.history) {
        losses["task"].push_back(r.task_loss);
        losses["style"].push_back(r.style_loss);
        losses["drm"].push_back(r.drm_loss);
        losses["success"].push_back(r.success);
    }
    json plan = json::array();
    for (int k = 0; k < result.chosen_plan.regions; ++k) {
        for (int m = 0; m < result.chosen_plan.actions; ++m) {
            const OpParams& p = result.chosen_plan.selected_params(k, m);
            plan.push_back({{"k", k},
                            {"m", m},
                            {"op", op_kind_info(p.kind).name},
                            {"params", p.values}});
        }
    }
    json j;
    j["schema"] = 1;
    j["config"] = {{"k", opt.config.regions},
                   {"m", opt.config.actions},
                   {"n", opt.config.num_ops},
                   {"i", opt.config.persistent_iters},
                   {"lambda_drm", opt.config.lambda_drm},
                   {"lr_p", opt.config.lr_logits},
                   {"lr_z", opt.config.lr_params},
                   {"iters", opt.config.max_iters},
                   {"tau", opt.config.tau},
                   {"style", opt.config.style_kind == StyleLossKind::Predictor ? "predictor"
                                                                               : "statistic"},
                   {"enable_style", opt.config.enable_style},
                   {"enable_drm", opt.config.enable_drm}};
    j["input"] = input_path;
    j["label"] = label;
    j["pred_before"] = result.pred_before;
    j["pred_after"] = result.pred_after;
    j["success"] = result.success;
    j["iterations"] = result.total_iters;
    j["first_success_iter"] = result.first_success_iter;
    j["chosen_iter"] = result.chosen_iter;
    j["losses"] = losses;
    j["plan"] = plan;
    j["seed"] = result.seed;
    j["wall_time_ms"] = wall_ms;
    return j;
}

StyleGuide load_style_guide(const AttackCliOptions& opt) {
    StyleGuide style;
    if (!opt.style_predictor_path.empty()) {
        style.kind = StyleLossKind::Predictor;
        style.predictor = load_style_predictor(load_weights(opt.style_predictor_path));
    } else if (!opt.style_ref_path.empty()) {
        style.kind = StyleLossKind::Statistic;
        style.reference = load_reference_json(opt.style_ref_path);
    } else if (!opt.disable_style) {
        throw std::runtime_error("attack needs --style-ref or --style-predictor");
    }
    return style;
}

int run_attack_command(AttackCliOptions& opt) {
    opt.config.enable_style = !opt.disable_style;
    opt.config.enable_drm = !opt.disable_drm;
    opt.config.style_kind = opt.style_predictor_path.empty() ? StyleLossKind::Statistic
                                                             : StyleLossKind::Predictor;
    opt.config.validate();

    const WeightStore victim_weights = load_weights(opt.victim_path);
    const StyleGuide style = load_style_guide(opt);

    if (fs::is_directory(opt.image)) {
        // batch mode: the directory's manifest supplies labels
        std::vector<ManifestEntry> entries = load_manifest((fs::path(opt.image) / "manifest.json").string());
        std::erase_if(entries, [&](const ManifestEntry& e) {
            return !opt.split.empty() && e.split != opt.split;
        });
        if (entries.empty()) throw std::runtime_error("no manifest entries selected");
        fs::create_directories(opt.out_path);
        fs::create_directories(opt.report_path);

        std::atomic<size_t> next{0};
        std::atomic<int> failures{0};
        const int jobs = std::max(1, opt.jobs);
        auto worker = [&]() {
            for (size_t i = next.fetch_add(1); i < entries.size(); i = next.fetch_add(1)) {
                const ManifestEntry& e = entries[i];
                try {
                    const std::string in_path = (fs::path(opt.image) / e.file).string();
                    const ImageTensor img = load_png(in_path);
                    // image size fixes the victim input; per-image nets keep workers independent
                    const Network<double> victim = load_victim(victim_weights, img.height);
                    AttackConfig cfg = opt.config;
                    cfg.seed = opt.config.seed + i;
                    const auto t0 = std::chrono::steady_clock::now();
                    const AttackResult result = run_attack(img, e.label, victim, style, cfg);
                    const double ms = std::chrono::duration<double, std::milli>(
                                          std::chrono::steady_clock::now() - t0)
                                          .count();
                    const std::string stem = fs::path(e.file).stem().string();
                    AttackCliOptions echo = opt;
                    echo.config = cfg;
                    save_png_atomic(result.adversarial,
                                    (fs::path(opt.out_path) / ("adv_" + stem + ".png")).string());
                    write_text_atomic(
                        (fs::path(opt.report_path) / ("report_" + stem + ".json")).string(),
                        report_json(echo, in_path, e.label, result, ms).dump(2) + "\n");
                } catch (const std::exception& ex) {
                    std::fprintf(stderr, "attack failed for %s: %s\n", e.file.c_str(), ex.what());
                    failures.fetch_add(1);
                }
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
        std::printf("attacked %zu images (%d failures)\n", entries.size(), failures.load());
        return failures.load() ? 1 : 0;
    }

    if (opt.label < 0) throw UsageError("--label is required for a single image");
    const ImageTensor img = load_png(opt.image);
    const Network<double> victim = load_victim(victim_weights, img.height);
    const auto t0 = std::chrono::steady_clock::now();
    const AttackResult result = run_attack(img, opt.label, victim, style, opt.config);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!opt.out_path.empty()) save_png_atomic(result.adversarial, opt.out_path);
    if (!opt.report_path.empty()) {
        write_text_atomic(opt.report_path,
                          report_json(opt, opt.image, opt.label, result, ms).dump(2) + "\n");
    }
    std::printf("success=%s iterations=%d first_success=%d chosen=%d pred %d -> %d\n",
                result.success ? "true" : "false", result.total_iters, result.first_success_iter,
                result.chosen_iter, result.pred_before, result.pred_after);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"differentiable image-retouching adversarial attack toolkit"};
    app.require_subcommand(1);

    // gen-data
    SyntheticDatasetSpec gen_spec;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic shape dataset");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_spec.seed, "rng seed");
    gen->add_option("--rho", gen_spec.color_shortcut_rho, "color shortcut strength in [0,1]");
    gen->add_option("--size", gen_spec.image_size, "image size in pixels");
    gen->add_option("--train", gen_spec.train_count, "training image count");
    gen->add_option("--test", gen_spec.test_count, "test image count");

    // train-victim
    std::string tv_data, tv_out;
    VictimTrainConfig tv_cfg;
    auto* tv = app.add_subcommand("train-victim", "train the toy victim classifier");
    tv->add_option("--data", tv_data, "dataset directory")->required();
    tv->add_option("--out", tv_out, "output weight file (.rtwf)")->required();
    tv->add_option("--epochs", tv_cfg.epochs, "training epochs");
    tv->add_option("--lr", tv_cfg.lr, "Adam learning rate");
    tv->add_option("--batch", tv_cfg.batch_size, "batch size");
    tv->add_option("--seed", tv_cfg.seed, "rng seed");

    // build-style-ref
    std::string sr_corpus, sr_out;
    auto* sr = app.add_subcommand("build-style-ref", "aggregate corpus style statistics");
    sr->add_option("--corpus", sr_corpus, "directory of reference PNGs")->required();
    sr->add_option("--out", sr_out, "output reference JSON")->required();

    // train-style
    std::string ts_corpus, ts_out;
    StyleTrainConfig ts_cfg;
    auto* ts = app.add_subcommand("train-style", "train the style deviation predictor");
    ts->add_option("--corpus", ts_corpus, "directory of reference PNGs")->required();
    ts->add_option("--out", ts_out, "output weight file (.rtwf)")->required();
    ts->add_option("--epochs", ts_cfg.epochs, "training epochs");
    ts->add_option("--lr", ts_cfg.lr, "Adam learning rate");
    ts->add_option("--width", ts_cfg.base_width, "base channel width");
    ts->add_option("--seed", ts_cfg.seed, "rng seed");

    // attack
    AttackCliOptions at;
    auto* atk = app.add_subcommand("attack", "run the retouching attack");
    atk->add_option("--image", at.image, "input PNG, or a dataset directory for batch mode")
        ->required();
    atk->add_option("--label", at.label, "true label (single-image mode)");
    atk->add_option("--victim", at.victim_path, "victim weight file")->required();
    atk->add_option("--style-ref", at.style_ref_path, "style reference JSON");
    atk->add_option("--style-predictor", at.style_predictor_path, "style predictor weights");
    atk->add_option("--out", at.out_path, "adversarial PNG path (or directory in batch mode)");
    atk->add_option("--report", at.report_path, "report JSON path (or directory in batch mode)");
    atk->add_option("--seed", at.config.seed, "rng seed");
    atk->add_option("--k", at.config.regions, "palette mask count K");
    atk->add_option("--m", at.config.actions, "actions per region M");
    atk->add_option("--i", at.config.persistent_iters, "persistent iterations I");
    atk->add_option("--lambda-drm", at.config.lambda_drm, "decision-diversity weight");
    atk->add_option("--lr-p", at.config.lr_logits, "probability-table learning rate");
    atk->add_option("--lr-z", at.config.lr_params, "parameter learning rate");
    atk->add_option("--iters", at.config.max_iters, "iteration cap / ramp horizon");
    atk->add_option("--tau", at.config.tau, "Gumbel-Softmax temperature");
    atk->add_option("--jobs", at.jobs, "concurrent attacks in batch mode");
    atk->add_option("--split", at.split, "manifest split in batch mode (default test)");
    atk->add_flag("--disable-style", at.disable_style, "drop the style term (ablation)");
    atk->add_flag("--disable-drm", at.disable_drm, "drop the diversity term (ablation)");

    // eval
    std::string ev_victim, ev_data, ev_split = "test", ev_out;
    auto* ev = app.add_subcommand("eval", "evaluate victim accuracy");
    ev->add_option("--victim", ev_victim, "victim weight file")->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--split", ev_split, "dataset split");
    ev->add_option("--out", ev_out, "write the JSON here instead of stdout");

    // report
    std::string rp_dir, rp_out;
    auto* rp = app.add_subcommand("report", "aggregate attack reports");
    rp->add_option("--reports", rp_dir, "directory of report JSON files")->required();
    rp->add_option("--out", rp_out, "write the JSON here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            const auto manifest = generate_dataset(gen_spec, gen_out);
            std::printf("wrote %zu images to %s\n", manifest.size(), gen_out.c_str());
        } else if (tv->parsed()) {
            const VictimTrainResult r = train_victim(tv_data, tv_cfg);
            save_weights(r.weights, tv_out);
            std::printf("train_accuracy=%.4f test_accuracy=%.4f weights=%s\n", r.train_accuracy,
                        r.test_accuracy, tv_out.c_str());
        } else if (sr->parsed()) {
            const StyleReference ref = build_reference(sr_corpus);
            save_reference_json(ref, sr_out);
            std::printf("aggregated %d images into %s\n", ref.image_count, sr_out.c_str());
        } else if (ts->parsed()) {
            const StyleTrainResult r = train_style_predictor(ts_corpus, ts_cfg);
            save_weights(r.weights, ts_out);
            std::printf("final_epoch_loss=%.6f weights=%s\n",
                        r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back(), ts_out.c_str());
        } else if (atk->parsed()) {
            return run_attack_command(at);
        } else if (ev->parsed()) {
            const EvalResult r = evaluate_victim(load_weights(ev_victim), ev_data, ev_split);
            json j;
            j["schema"] = 1;
            j["split"] = ev_split;
            j["count"] = r.count;
            j["accuracy"] = r.accuracy;
            j["confusion"] = r.confusion;
            const std::string text = j.dump(2) + "\n";
            if (ev_out.empty()) {
                std::cout << text;
            } else {
                write_text_atomic(ev_out, text);
            }
        } else if (rp->parsed()) {
            int count = 0, successes = 0;
            double iter_sum = 0.0, style_sum = 0.0;
            for (const auto& entry : fs::directory_iterator(rp_dir)) {
                if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
                std::ifstream in(entry.path());
                json j;
                in >> j;
                ++count;
                if (j.at("success").get<bool>()) ++successes;
                iter_sum += j.at("iterations").get<double>();
                style_sum += j.at("losses").at("style")[j.at("chosen_iter").get<size_t>()]
                                 .get<double>();
            }
            if (count == 0) throw std::runtime_error("no report files in " + rp_dir);
            json j;
            j["schema"] = 1;
            j["count"] = count;
            j["successes"] = successes;
            j["success_rate"] = static_cast<double>(successes) / count;
            j["mean_iterations"] = iter_sum / count;
            j["mean_style_loss"] = style_sum / count;
            const std::string text = j.dump(2) + "\n";
            if (rp_out.empty()) {
                std::cout << text;
            } else {
                write_text_atomic(rp_out, text);
            }
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

// Command-line entry point: prepare / train / infer / eval / ablate.
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fgsr/checkpoint.hpp"
#include "fgsr/dataset.hpp"
#include "fgsr/image_io.hpp"
#include "fgsr/metrics.hpp"
#include "fgsr/nets.hpp"
#include "fgsr/resample.hpp"
#include "fgsr/trainer.hpp"

using namespace fgsr;
namespace fsys = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string timestamp_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    localtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    return buf;
}

std::string iso_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    localtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    return buf;
}

std::vector<fsys::path> sorted_pngs(const fsys::path& dir) {
    if (!fsys::is_directory(dir))
        throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fsys::path> out;
    for (const auto& e : fsys::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path + " is not valid JSON: " + e.what());
    }
    return j;
}

void write_text(const fsys::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// ---------------------------------------------------------------------------
// prepare

int cmd_prepare(const std::string& hr_dir, const std::string& out_dir, int scale,
                int synthetic_count, int synthetic_size, std::uint64_t seed) {
    if (synthetic_count > 0 && !fsys::exists(hr_dir)) {
        make_synthetic_corpus(hr_dir, synthetic_count, synthetic_size, seed);
        std::printf("generated %d synthetic HR images in %s\n", synthetic_count,
                    hr_dir.c_str());
    }
    const fsys::path lr_root = fsys::path(out_dir) / ("X" + std::to_string(scale));
    fsys::create_directories(lr_root);
    int prepared = 0, skipped = 0;
    for (const auto& hr_path : sorted_pngs(hr_dir)) {
        const Tensor hr = load_png(hr_path.string());
        Tensor lr = bicubic_downscale(hr, scale);
        const fsys::path out_path = lr_root / hr_path.filename();
        if (fsys::exists(out_path)) {
            // idempotence: skip when the existing file already holds the
            // 8-bit quantization of the freshly computed LR image
            const Tensor existing = load_png(out_path.string());
            bool same = existing.shape() == lr.shape();
            for (std::int64_t i = 0; same && i < lr.numel(); ++i) {
                const double q =
                    std::round(std::min(1.0, std::max(0.0, lr[i])) * 255.0) / 255.0;
                same = std::fabs(existing[i] - q) < 1e-9;
            }
            if (same) {
                ++skipped;
                continue;
            }
        }
        save_png(out_path.string(), lr);
        ++prepared;
    }
    std::printf("prepared=%d skipped=%d out=%s\n", prepared, skipped,
                lr_root.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train

fsys::path make_run_dir(const std::string& base, const std::string& mode) {
    fsys::path dir = fsys::path(base) / (timestamp_now() + "-" + mode);
    for (int n = 1; fsys::exists(dir); ++n)
        dir = fsys::path(base) / (timestamp_now() + "-" + mode + "-" + std::to_string(n));
    fsys::create_directories(dir / "checkpoints");
    fsys::create_directories(dir / "logs");
    fsys::create_directories(dir / "samples");
    return dir;
}

struct TrainResult {
    std::int64_t final_step = 0;
    std::map<std::string, double> final_losses;
    std::int64_t param_count = 0;
};

TrainResult run_training(std::unique_ptr<Trainer> trainer, const fsys::path& run_dir,
                         bool deterministic, std::int64_t checkpoint_every,
                         int log_every) {
    const TrainConfig& cfg = trainer->config();
    DatasetConfig data = cfg.data;
    data.scale = cfg.scale;
    data.patch_size_lr = cfg.patch_size_lr;
    data.batch_size = cfg.batch;
    if (data.hr_dir.empty())
        throw std::invalid_argument("config: data.hr_dir must name the HR corpus");
    std::vector<ImagePair> corpus = load_corpus(data);
    // the iterator draws from the trainer-owned RNG so the data stream is part
    // of the checkpointed state and resumes replay bit-exactly
    BatchIterator iterator(corpus, data, cfg.seed);

    json manifest;
    manifest["version"] = kVersion;
    manifest["config"] = cfg.to_json();
    manifest["seed"] = cfg.seed;
    manifest["deterministic"] = deterministic;
    manifest["started"] = iso_now();
    manifest["paths"] = {{"checkpoints", (run_dir / "checkpoints").string()},
                         {"logs", (run_dir / "logs").string()},
                         {"samples", (run_dir / "samples").string()}};
    manifest["resumed_from_step"] = trainer->step();
    write_text(run_dir / "manifest.json", manifest.dump(2));

    std::ofstream log_file(run_dir / "logs" / "train.log", std::ios::app);
    const std::int64_t target = cfg.pretrain_steps + cfg.total_steps;
    TrainResult result;
    while (trainer->step() < target) {
        const bool pretrain_phase = cfg.mode == TrainMode::PsnrPretrain ||
                                    trainer->step() < cfg.pretrain_steps;
        Batch batch = iterator.next(trainer->rng());
        const StepLog log =
            pretrain_phase ? trainer->pretrain_step(batch) : trainer->gan_step(batch);
        log_file << log.format() << "\n";
        if (log_every > 0 && log.step % log_every == 0)
            std::printf("%s\n", log.format().c_str());
        if (checkpoint_every > 0 && log.step % checkpoint_every == 0)
            trainer->save_checkpoint((run_dir / "checkpoints" / "latest.ckpt").string());
        result.final_losses.clear();
        for (const auto& [k, v] : log.values) result.final_losses[k] = v;
    }
    result.final_step = trainer->step();
    result.param_count = count_parameters(trainer->all_params());
    trainer->save_checkpoint((run_dir / "checkpoints" / "final.ckpt").string());

    if (!corpus.empty()) {
        const Tensor sr = trainer->infer(corpus.front().lr);
        save_png((run_dir / "samples" / (corpus.front().id + "-sr.png")).string(), sr);
    }
    manifest["finished"] = iso_now();
    manifest["final_step"] = result.final_step;
    manifest["parameter_count"] = result.param_count;
    write_text(run_dir / "manifest.json", manifest.dump(2));
    return result;
}

int cmd_train(const std::string& config_path, const std::string& resume_path,
              const std::string& run_base, std::optional<std::uint64_t> seed_override,
              std::optional<std::int64_t> pretrain_override,
              std::optional<std::int64_t> gan_override, bool deterministic,
              std::int64_t checkpoint_every, int log_every) {
    std::unique_ptr<Trainer> trainer;
    if (!resume_path.empty()) {
        trainer = Trainer::resume(resume_path);
    } else {
        TrainConfig cfg = TrainConfig::from_json(load_json_file(config_path));
        if (seed_override) cfg.seed = *seed_override;
        if (pretrain_override) cfg.pretrain_steps = *pretrain_override;
        if (gan_override) cfg.total_steps = *gan_override;
        trainer = std::make_unique<Trainer>(cfg);
    }
    const fsys::path run_dir = make_run_dir(run_base, to_string(trainer->config().mode));
    std::printf("run dir: %s\n", run_dir.string().c_str());
    run_training(std::move(trainer), run_dir, deterministic, checkpoint_every, log_every);
    return 0;
}

// ---------------------------------------------------------------------------
// infer

int cmd_infer(const std::string& checkpoint, const std::string& input,
              const std::string& out, int tile, int expect_scale) {
    const SrModel model = SrModel::load(checkpoint);
    if (expect_scale > 0 && model.scale != expect_scale)
        throw std::runtime_error("checkpoint scale is x" + std::to_string(model.scale) +
                                 ", expected x" + std::to_string(expect_scale));
    auto one = [&](const fsys::path& in_path, const fsys::path& out_path) {
        const Tensor lr = load_png(in_path.string());
        const Tensor sr = model.upscale(lr, tile);
        if (out_path.has_parent_path()) fsys::create_directories(out_path.parent_path());
        save_png(out_path.string(), sr);
        std::printf("%s -> %s (%dx%d -> %dx%d)\n", in_path.string().c_str(),
                    out_path.string().c_str(), lr.dim(2), lr.dim(1), sr.dim(2), sr.dim(1));
    };
    if (fsys::is_directory(input)) {
        fsys::create_directories(out);
        for (const auto& p : sorted_pngs(input)) one(p, fsys::path(out) / p.filename());
    } else {
        one(input, out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& sr_dir, const std::string& hr_dir, const EvalOptions& opts,
             const std::string& json_out) {
    const EvalReport report = evaluate_dir(sr_dir, hr_dir, opts);
    std::printf("%s", report_table(report).c_str());
    if (!json_out.empty()) write_text(json_out, report_json(report).dump(2));
    return 0;
}

// ---------------------------------------------------------------------------
// ablate

TrainConfig arm_config(TrainConfig base, const std::string& arm) {
    if (arm == "fasrgan") {
        base.mode = TrainMode::Fasrgan;
        base.attention_enabled = true;
    } else if (arm == "fasrgan-no-attention") {
        base.mode = TrainMode::Fasrgan;
        base.attention_enabled = false;
    } else if (arm == "fs-srgan") {
        base.mode = TrainMode::FsSrgan;
    } else if (arm == "fa-fs-srgan") {
        base.mode = TrainMode::FaFsSrgan;
        base.attention_enabled = true;
    } else if (arm.rfind("fs-e", 0) == 0) {
        base.mode = TrainMode::FsSrgan;
        const int e = std::stoi(arm.substr(4));
        if (e < 1) throw std::invalid_argument("ablate: E must be >= 1 in arm " + arm);
        base.shared_cfg.num_rrdbs = e;
    } else {
        throw std::invalid_argument(
            "ablate: unknown arm '" + arm +
            "' (expected fasrgan, fasrgan-no-attention, fs-srgan, fa-fs-srgan, fs-e<N>)");
    }
    return base;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& arms,
               const std::string& out_dir, std::optional<std::uint64_t> seed_override,
               std::optional<std::int64_t> pretrain_override,
               std::optional<std::int64_t> gan_override, bool deterministic) {
    if (arms.empty()) throw std::invalid_argument("ablate: at least one arm is required");
    TrainConfig base = TrainConfig::from_json(load_json_file(config_path));
    if (seed_override) base.seed = *seed_override;
    if (pretrain_override) base.pretrain_steps = *pretrain_override;
    if (gan_override) base.total_steps = *gan_override;

    const fsys::path root =
        out_dir.empty() ? fsys::path("runs") / ("ablate-" + timestamp_now())
                        : fsys::path(out_dir);
    json comparison = json::array();
    std::printf("%-22s %12s %12s %12s\n", "arm", "params", "l1", "l_total");
    for (const auto& arm : arms) {
        TrainConfig cfg = arm_config(base, arm);
        const fsys::path run_dir = root / arm;
        fsys::create_directories(run_dir / "checkpoints");
        fsys::create_directories(run_dir / "logs");
        fsys::create_directories(run_dir / "samples");
        TrainResult r = run_training(std::make_unique<Trainer>(cfg), run_dir,
                                     deterministic, 0, 0);
        json row = {{"arm", arm},
                    {"mode", to_string(cfg.mode)},
                    {"parameter_count", r.param_count},
                    {"final_step", r.final_step},
                    {"final_losses", r.final_losses}};
        comparison.push_back(row);
        std::printf("%-22s %12lld %12.5f %12.5f\n", arm.c_str(),
                    static_cast<long long>(r.param_count),
                    r.final_losses.count("l1") ? r.final_losses.at("l1") : 0.0,
                    r.final_losses.count("l_total") ? r.final_losses.at("l_total") : 0.0);
    }
    write_text(root / "comparison.json", json{{"arms", comparison}}.dump(2));
    std::printf("comparison report: %s\n", (root / "comparison.json").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Super-resolution training and evaluation toolkit"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed_override;
    bool deterministic = true;
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_flag("--deterministic,!--no-deterministic", deterministic,
                 "single-threaded bit-reproducible execution (default on)");

    // prepare
    auto* prep = app.add_subcommand("prepare", "bicubic-downscale an HR corpus to LR");
    std::string p_hr, p_out;
    int p_scale = 4, p_syn = 0, p_size = 96;
    prep->add_option("--hr", p_hr, "HR image directory")->required();
    prep->add_option("--out", p_out, "output root (LR lands in <out>/X<scale>/)")->required();
    prep->add_option("--scale", p_scale, "downscale factor")->check(CLI::PositiveNumber);
    prep->add_option("--synthetic", p_syn,
                     "generate this many synthetic HR images first if --hr is missing");
    prep->add_option("--size", p_size, "synthetic image size");

    // train
    auto* train = app.add_subcommand("train", "run the training protocol from a config");
    std::string t_config, t_resume, t_run_base = "runs";
    std::optional<std::int64_t> t_pre, t_gan;
    std::int64_t t_ckpt_every = 0;
    int t_log_every = 10;
    bool t_dump = false;
    std::string t_dump_mode = "fasrgan";
    train->add_option("--config", t_config, "training config (JSON)");
    train->add_option("--resume", t_resume, "checkpoint to resume from");
    train->add_option("--run-dir", t_run_base, "base directory for run outputs");
    train->add_option("--pretrain-steps", t_pre, "override config pretrain_steps");
    train->add_option("--gan-steps", t_gan, "override config total_steps");
    train->add_option("--checkpoint-every", t_ckpt_every, "periodic checkpoint interval");
    train->add_option("--log-every", t_log_every, "stdout log interval (0 = quiet)");
    train->add_flag("--dump-config", t_dump, "print a default config for --mode and exit");
    train->add_option("--mode", t_dump_mode, "mode for --dump-config");

    // infer
    auto* infer = app.add_subcommand("infer", "upscale PNG image(s) with a checkpoint");
    std::string i_ckpt, i_in, i_out;
    int i_tile = 48, i_expect_scale = 0;
    infer->add_option("--checkpoint", i_ckpt, "trainer or model checkpoint")->required();
    infer->add_option("--input", i_in, "LR PNG file or directory")->required();
    infer->add_option("--out", i_out, "output PNG file or directory")->required();
    infer->add_option("--tile", i_tile, "LR-space tile size (0 = untiled)");
    infer->add_option("--expect-scale", i_expect_scale,
                      "fail unless the checkpoint upscales by this factor");

    // eval
    auto* eval = app.add_subcommand("eval", "compare an SR directory against HR ground truth");
    std::string e_sr, e_hr, e_json, e_scorer;
    EvalOptions e_opts;
    eval->add_option("--sr", e_sr, "SR image directory")->required();
    eval->add_option("--hr", e_hr, "HR image directory")->required();
    eval->add_option("--border-crop", e_opts.border_crop, "crop border pixels before metrics");
    eval->add_flag("--rmse-rgb", e_opts.rmse_on_rgb, "RMSE on RGB instead of luma");
    eval->add_option("--scorer", e_scorer, "external no-reference scorer command");
    eval->add_option("--scale", e_opts.scale, "scale echoed into the report");
    eval->add_option("--json", e_json, "write the JSON report here");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run an ablation arm matrix");
    std::string a_config, a_out;
    std::vector<std::string> a_arms;
    std::optional<std::int64_t> a_pre, a_gan;
    ablate->add_option("--config", a_config, "base training config (JSON)")->required();
    ablate->add_option("--arms", a_arms, "arm names (comma separated)")
        ->required()
        ->delimiter(',');
    ablate->add_option("--out", a_out, "output directory for the arm runs");
    ablate->add_option("--pretrain-steps", a_pre, "override config pretrain_steps");
    ablate->add_option("--gan-steps", a_gan, "override config total_steps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*prep)
            return cmd_prepare(p_hr, p_out, p_scale, p_syn, p_size,
                               seed_override.value_or(0));
        if (*train) {
            if (t_dump) {
                TrainConfig cfg;
                cfg.mode = train_mode_from_string(t_dump_mode);
                std::printf("%s\n", cfg.to_json().dump(2).c_str());
                return 0;
            }
            if (t_config.empty() && t_resume.empty())
                throw std::invalid_argument("train: --config or --resume is required");
            return cmd_train(t_config, t_resume, t_run_base, seed_override, t_pre, t_gan,
                             deterministic, t_ckpt_every, t_log_every);
        }
        if (*infer) return cmd_infer(i_ckpt, i_in, i_out, i_tile, i_expect_scale);
        if (*eval) {
            e_opts.external_scorer = e_scorer;
            return cmd_eval(e_sr, e_hr, e_opts, e_json);
        }
        if (*ablate)
            return cmd_ablate(a_config, a_arms, a_out, seed_override, a_pre, a_gan,
                              deterministic);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

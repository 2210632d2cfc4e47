#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "fgsr/dataset.hpp"
#include "fgsr/losses.hpp"
#include "fgsr/nets.hpp"
#include "fgsr/optimizer.hpp"

namespace fgsr {

enum class TrainMode { PsnrPretrain, Fasrgan, FsSrgan, FaFsSrgan };
enum class SharedUpdatePolicy { Both, GeneratorOnly, DiscriminatorOnly };
enum class PerceptualKind { None, Identity, ConvStub, Loaded };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);
std::string to_string(SharedUpdatePolicy p);
SharedUpdatePolicy shared_policy_from_string(const std::string& s);
std::string to_string(PerceptualKind k);
PerceptualKind perceptual_kind_from_string(const std::string& s);

struct TrainConfig {
    TrainMode mode = TrainMode::Fasrgan;
    double lr0 = 1e-4;
    std::int64_t lr_halve_every = 200000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 0.0;
    int batch = 16;
    std::int64_t total_steps = 0;     // adversarial steps after pretraining
    std::int64_t pretrain_steps = 0;
    std::uint64_t seed = 0;
    LossWeights weights;
    SharedUpdatePolicy shared_update_policy = SharedUpdatePolicy::Both;
    bool attention_enabled = true;
    bool bce_style = false;          // negated (BCE) sign convention for Eq-style losses
    bool non_saturating_g = true;    // plain GAN generator variant
    PerceptualKind perceptual = PerceptualKind::ConvStub;
    std::string perceptual_path;     // archive for PerceptualKind::Loaded

    int channels = 3;
    int scale = 4;
    int patch_size_lr = 48;
    RrdbConfig gen_trunk{64, 32, 23, 0.2};
    SharedExtractorConfig shared_cfg{3, 64, 32, 1, 0.2};
    FineGrainedDiscriminatorConfig fgd_cfg;
    PlainDiscriminatorConfig plain_cfg;

    DatasetConfig data;  // hr_dir etc. (used by the CLI; library tests feed batches directly)

    int hr_patch() const { return patch_size_lr * scale; }
    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

double lr_at(std::int64_t step, const TrainConfig& cfg);

struct StepLog {
    std::int64_t step = 0;
    double lr = 0.0;
    std::vector<std::pair<std::string, double>> values;  // stable key order

    std::optional<double> get(const std::string& key) const;
    std::string format() const;  // "step=N lr=... k=v ..."
};

// Owns models, optimizers, the RNG and the step counter; fully serializable
// so a resumed run replays bit-exactly.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);

    StepLog pretrain_step(const Batch& batch);
    StepLog gan_step(const Batch& batch);

    // Invoked with "after_d" / "after_g" inside gan_step, between the two
    // half-updates; lets tests audit the freezing discipline.
    std::function<void(const char*)> phase_hook;

    void save_checkpoint(const std::string& path) const;
    static std::unique_ptr<Trainer> resume(const std::string& path);

    std::int64_t step() const { return step_; }
    double current_lr() const;
    const TrainConfig& config() const { return cfg_; }
    Rng& rng() { return rng_; }

    // SR forward for the active mode (through the shared extractor when present)
    Var forward_sr(const Var& lr) const;
    Tensor infer(const Tensor& lr_chw) const;  // single image, clamped to [0,1]

    GeneratorNet& generator() { return *gen_; }
    SharedExtractor* shared() { return shared_.get(); }
    FineGrainedDiscriminator* fine_discriminator() { return fgd_.get(); }
    PlainDiscriminator* plain_discriminator() { return plain_.get(); }

    // Parameter views used by the freezing/sharing tests.
    ParamList generator_exclusive_params() const;
    ParamList discriminator_exclusive_params() const;
    ParamList shared_params() const;
    ParamList all_params() const;

    const std::map<std::string, std::pair<double, std::int64_t>>& running_losses() const {
        return running_;
    }

private:
    void build_models();
    void build_optimizers();
    ParamList optimizer_g_params() const;
    ParamList optimizer_d_params() const;
    void record(StepLog& log);

    TrainConfig cfg_;
    Rng rng_;
    std::int64_t step_ = 0;
    std::shared_ptr<SharedExtractor> shared_;
    std::shared_ptr<SharedExtractor> shared_disc_view_;  // same instance by construction
    std::shared_ptr<GeneratorNet> gen_;
    std::shared_ptr<FineGrainedDiscriminator> fgd_;
    std::shared_ptr<PlainDiscriminator> plain_;
    std::unique_ptr<Adam> opt_g_, opt_d_;
    std::unique_ptr<FeatureExtractor> phi_;
    std::map<std::string, std::pair<double, std::int64_t>> running_;  // name -> (sum, count)
};

// Tiled upscaling: each tile is run with `overlap` pixels of real-image halo
// on every interior side and only the core is kept, so the result is exact
// (bit-identical to untiled) whenever the halo covers the network's receptive
// field. tile/overlap are LR-space pixels; tile is the full patch size fed to
// sr_fn, core size is tile - 2*overlap.
Tensor upscale_tiled(const std::function<Tensor(const Tensor&)>& sr_fn, const Tensor& lr,
                     int scale, int tile = 48, int overlap = 16);

// Minimal generator-side model reconstructed from a checkpoint, for inference.
struct SrModel {
    std::shared_ptr<SharedExtractor> shared;
    std::shared_ptr<GeneratorNet> gen;
    int scale = 4;

    Tensor upscale(const Tensor& lr_chw, int tile = 0) const;  // tile 0 = untiled
    static SrModel load(const std::string& checkpoint_path);
};

}  // namespace fgsr

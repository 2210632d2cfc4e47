#include "fgsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fgsr/checkpoint.hpp"

namespace fgsr {

namespace {

constexpr int kCheckpointFormat = 1;

void require_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                  const std::string& section) {
    std::vector<std::string> bad;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            bad.push_back(it.key());
    if (!bad.empty()) {
        std::string msg = "config: unknown key(s) in " + section + ":";
        for (const auto& k : bad) msg += " " + k;
        throw std::invalid_argument(msg);
    }
}

void check_finite(const Var& v, const char* what) {
    if (!std::isfinite(v->value[0]))
        throw std::runtime_error(std::string("training divergence: non-finite ") + what);
}

}  // namespace

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::PsnrPretrain: return "psnr-pretrain";
        case TrainMode::Fasrgan: return "fasrgan";
        case TrainMode::FsSrgan: return "fs-srgan";
        case TrainMode::FaFsSrgan: return "fa-fs-srgan";
    }
    return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "psnr-pretrain") return TrainMode::PsnrPretrain;
    if (s == "fasrgan") return TrainMode::Fasrgan;
    if (s == "fs-srgan") return TrainMode::FsSrgan;
    if (s == "fa-fs-srgan") return TrainMode::FaFsSrgan;
    throw std::invalid_argument("config: unknown mode '" + s + "'");
}

std::string to_string(SharedUpdatePolicy p) {
    switch (p) {
        case SharedUpdatePolicy::Both: return "both";
        case SharedUpdatePolicy::GeneratorOnly: return "generator-only";
        case SharedUpdatePolicy::DiscriminatorOnly: return "discriminator-only";
    }
    return "?";
}

SharedUpdatePolicy shared_policy_from_string(const std::string& s) {
    if (s == "both") return SharedUpdatePolicy::Both;
    if (s == "generator-only") return SharedUpdatePolicy::GeneratorOnly;
    if (s == "discriminator-only") return SharedUpdatePolicy::DiscriminatorOnly;
    throw std::invalid_argument("config: unknown shared_update_policy '" + s + "'");
}

std::string to_string(PerceptualKind k) {
    switch (k) {
        case PerceptualKind::None: return "none";
        case PerceptualKind::Identity: return "identity";
        case PerceptualKind::ConvStub: return "conv-stub";
        case PerceptualKind::Loaded: return "loaded";
    }
    return "?";
}

PerceptualKind perceptual_kind_from_string(const std::string& s) {
    if (s == "none") return PerceptualKind::None;
    if (s == "identity") return PerceptualKind::Identity;
    if (s == "conv-stub") return PerceptualKind::ConvStub;
    if (s == "loaded") return PerceptualKind::Loaded;
    throw std::invalid_argument("config: unknown perceptual kind '" + s + "'");
}

void TrainConfig::validate() const {
    if (lr0 <= 0.0) throw std::invalid_argument("config: lr0 must be > 0");
    if (lr_halve_every <= 0) throw std::invalid_argument("config: lr_halve_every must be > 0");
    if (batch < 1) throw std::invalid_argument("config: batch must be >= 1");
    if (patch_size_lr < 1) throw std::invalid_argument("config: patch_size_lr must be >= 1");
    weights.validate();
    if (perceptual == PerceptualKind::Loaded && perceptual_path.empty())
        throw std::invalid_argument("config: perceptual kind 'loaded' needs perceptual.path");
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j;
    j["mode"] = to_string(mode);
    j["lr0"] = lr0;
    j["lr_halve_every"] = lr_halve_every;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["adam_eps"] = adam_eps;
    j["clip_norm"] = clip_norm;
    j["batch"] = batch;
    j["total_steps"] = total_steps;
    j["pretrain_steps"] = pretrain_steps;
    j["seed"] = seed;
    j["shared_update_policy"] = to_string(shared_update_policy);
    j["attention_enabled"] = attention_enabled;
    j["bce_style"] = bce_style;
    j["non_saturating_g"] = non_saturating_g;
    j["weights"] = {{"lambda1", weights.lambda1},
                    {"lambda2", weights.lambda2},
                    {"lambda3", weights.lambda3}};
    j["perceptual"] = {{"kind", to_string(perceptual)}, {"path", perceptual_path}};
    j["arch"] = {
        {"channels", channels},
        {"scale", scale},
        {"patch_size_lr", patch_size_lr},
        {"generator",
         {{"num_features", gen_trunk.num_features},
          {"growth", gen_trunk.growth},
          {"num_blocks", gen_trunk.num_blocks},
          {"residual_scale", gen_trunk.residual_scale}}},
        {"shared",
         {{"num_features", shared_cfg.num_features},
          {"growth", shared_cfg.growth},
          {"num_rrdbs", shared_cfg.num_rrdbs},
          {"residual_scale", shared_cfg.residual_scale}}},
        {"fg_discriminator",
         {{"base_channels", fgd_cfg.base_channels},
          {"max_channels", fgd_cfg.max_channels},
          {"depth", fgd_cfg.depth},
          {"fc_hidden", fgd_cfg.fc_hidden},
          {"mask_channels", fgd_cfg.mask_channels}}},
        {"plain_discriminator",
         {{"base_channels", plain_cfg.base_channels},
          {"max_channels", plain_cfg.max_channels},
          {"num_stages", plain_cfg.num_stages},
          {"fc_hidden", plain_cfg.fc_hidden}}}};
    j["data"] = {{"hr_dir", data.hr_dir},
                 {"lr_dir", data.lr_dir ? nlohmann::json(*data.lr_dir) : nlohmann::json()},
                 {"augment", data.augment}};
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    require_keys(j, {"mode", "lr0", "lr_halve_every", "adam_beta1", "adam_beta2", "adam_eps",
                     "clip_norm", "batch", "total_steps", "pretrain_steps", "seed",
                     "shared_update_policy", "attention_enabled", "bce_style",
                     "non_saturating_g", "weights", "perceptual", "arch", "data"},
                 "top level");
    TrainConfig c;
    if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
    c.lr0 = j.value("lr0", c.lr0);
    c.lr_halve_every = j.value("lr_halve_every", c.lr_halve_every);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.batch = j.value("batch", c.batch);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.pretrain_steps = j.value("pretrain_steps", c.pretrain_steps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("shared_update_policy"))
        c.shared_update_policy =
            shared_policy_from_string(j.at("shared_update_policy").get<std::string>());
    c.attention_enabled = j.value("attention_enabled", c.attention_enabled);
    c.bce_style = j.value("bce_style", c.bce_style);
    c.non_saturating_g = j.value("non_saturating_g", c.non_saturating_g);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        require_keys(w, {"lambda1", "lambda2", "lambda3"}, "weights");
        c.weights.lambda1 = w.value("lambda1", c.weights.lambda1);
        c.weights.lambda2 = w.value("lambda2", c.weights.lambda2);
        c.weights.lambda3 = w.value("lambda3", c.weights.lambda3);
    }
    if (j.contains("perceptual")) {
        const auto& p = j.at("perceptual");
        require_keys(p, {"kind", "path"}, "perceptual");
        if (p.contains("kind"))
            c.perceptual = perceptual_kind_from_string(p.at("kind").get<std::string>());
        c.perceptual_path = p.value("path", std::string());
    }
    if (j.contains("arch")) {
        const auto& a = j.at("arch");
        require_keys(a,
                     {"channels", "scale", "patch_size_lr", "generator", "shared",
                      "fg_discriminator", "plain_discriminator"},
                     "arch");
        c.channels = a.value("channels", c.channels);
        c.scale = a.value("scale", c.scale);
        c.patch_size_lr = a.value("patch_size_lr", c.patch_size_lr);
        if (a.contains("generator")) {
            const auto& g = a.at("generator");
            require_keys(g, {"num_features", "growth", "num_blocks", "residual_scale"},
                         "arch.generator");
            c.gen_trunk.num_features = g.value("num_features", c.gen_trunk.num_features);
            c.gen_trunk.growth = g.value("growth", c.gen_trunk.growth);
            c.gen_trunk.num_blocks = g.value("num_blocks", c.gen_trunk.num_blocks);
            c.gen_trunk.residual_scale = g.value("residual_scale", c.gen_trunk.residual_scale);
        }
        if (a.contains("shared")) {
            const auto& s = a.at("shared");
            require_keys(s, {"num_features", "growth", "num_rrdbs", "residual_scale"},
                         "arch.shared");
            c.shared_cfg.num_features = s.value("num_features", c.shared_cfg.num_features);
            c.shared_cfg.growth = s.value("growth", c.shared_cfg.growth);
            c.shared_cfg.num_rrdbs = s.value("num_rrdbs", c.shared_cfg.num_rrdbs);
            c.shared_cfg.residual_scale = s.value("residual_scale", c.shared_cfg.residual_scale);
        }
        if (a.contains("fg_discriminator")) {
            const auto& d = a.at("fg_discriminator");
            require_keys(d, {"base_channels", "max_channels", "depth", "fc_hidden",
                             "mask_channels"},
                         "arch.fg_discriminator");
            c.fgd_cfg.base_channels = d.value("base_channels", c.fgd_cfg.base_channels);
            c.fgd_cfg.max_channels = d.value("max_channels", c.fgd_cfg.max_channels);
            c.fgd_cfg.depth = d.value("depth", c.fgd_cfg.depth);
            c.fgd_cfg.fc_hidden = d.value("fc_hidden", c.fgd_cfg.fc_hidden);
            c.fgd_cfg.mask_channels = d.value("mask_channels", c.fgd_cfg.mask_channels);
        }
        if (a.contains("plain_discriminator")) {
            const auto& d = a.at("plain_discriminator");
            require_keys(d, {"base_channels", "max_channels", "num_stages", "fc_hidden"},
                         "arch.plain_discriminator");
            c.plain_cfg.base_channels = d.value("base_channels", c.plain_cfg.base_channels);
            c.plain_cfg.max_channels = d.value("max_channels", c.plain_cfg.max_channels);
            c.plain_cfg.num_stages = d.value("num_stages", c.plain_cfg.num_stages);
            c.plain_cfg.fc_hidden = d.value("fc_hidden", c.plain_cfg.fc_hidden);
        }
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        require_keys(d, {"hr_dir", "lr_dir", "augment"}, "data");
        c.data.hr_dir = d.value("hr_dir", std::string());
        if (d.contains("lr_dir") && !d.at("lr_dir").is_null())
            c.data.lr_dir = d.at("lr_dir").get<std::string>();
        c.data.augment = d.value("augment", true);
    }
    c.data.scale = c.scale;
    c.data.patch_size_lr = c.patch_size_lr;
    c.data.batch_size = c.batch;
    c.validate();
    return c;
}

double lr_at(std::int64_t step, const TrainConfig& cfg) {
    if (step < 0) throw std::invalid_argument("lr_at: negative step");
    return cfg.lr0 * std::pow(0.5, static_cast<double>(step / cfg.lr_halve_every));
}

std::optional<double> StepLog::get(const std::string& key) const {
    for (const auto& [k, v] : values)
        if (k == key) return v;
    return std::nullopt;
}

std::string StepLog::format() const {
    std::ostringstream os;
    os.precision(10);
    os << "step=" << step << " lr=" << lr;
    for (const auto& [k, v] : values) os << " " << k << "=" << v;
    return os.str();
}

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    build_models();
    build_optimizers();
    switch (cfg_.perceptual) {
        case PerceptualKind::None: break;
        case PerceptualKind::Identity: phi_ = std::make_unique<IdentityFeatures>(); break;
        case PerceptualKind::ConvStub:
            phi_ = std::make_unique<ConvStubFeatures>(cfg_.channels);
            break;
        case PerceptualKind::Loaded: phi_ = LoadedFeatureNet::load(cfg_.perceptual_path); break;
    }
}

void Trainer::build_models() {
    const bool fs = cfg_.mode == TrainMode::FsSrgan || cfg_.mode == TrainMode::FaFsSrgan;
    if (fs) {
        SharedExtractorConfig sc = cfg_.shared_cfg;
        sc.channels = cfg_.channels;
        shared_ = std::make_shared<SharedExtractor>(sc, rng_);
        shared_disc_view_ = shared_;  // one parameter set, two paths
    }
    GeneratorConfig gc;
    gc.channels = cfg_.channels;
    gc.scale = cfg_.scale;
    gc.trunk = cfg_.gen_trunk;
    gc.external_features = fs;
    if (fs) gc.trunk.num_features = cfg_.shared_cfg.num_features;
    gen_ = std::make_shared<GeneratorNet>(gc, rng_);

    if (cfg_.mode == TrainMode::Fasrgan || cfg_.mode == TrainMode::FaFsSrgan) {
        FineGrainedDiscriminatorConfig dc = cfg_.fgd_cfg;
        dc.in_channels = fs ? cfg_.shared_cfg.num_features : cfg_.channels;
        if (dc.mask_channels != 1) dc.mask_channels = cfg_.channels;
        dc.input_size = cfg_.hr_patch();
        fgd_ = std::make_shared<FineGrainedDiscriminator>(dc, rng_);
    } else if (cfg_.mode == TrainMode::FsSrgan) {
        PlainDiscriminatorConfig dc = cfg_.plain_cfg;
        dc.in_channels = cfg_.shared_cfg.num_features;
        dc.input_size = cfg_.hr_patch();
        plain_ = std::make_shared<PlainDiscriminator>(dc, rng_);
    }
}

ParamList Trainer::generator_exclusive_params() const { return gen_->parameters("gen"); }

ParamList Trainer::discriminator_exclusive_params() const {
    if (fgd_) return fgd_->parameters("disc");
    if (plain_) return plain_->parameters("disc");
    return {};
}

ParamList Trainer::shared_params() const {
    return shared_ ? shared_->parameters("shared") : ParamList{};
}

ParamList Trainer::all_params() const {
    ParamList out = generator_exclusive_params();
    for (auto& p : discriminator_exclusive_params()) out.push_back(p);
    for (auto& p : shared_params()) out.push_back(p);
    return out;
}

ParamList Trainer::optimizer_g_params() const {
    ParamList out = generator_exclusive_params();
    if (shared_ && (cfg_.shared_update_policy == SharedUpdatePolicy::Both ||
                    cfg_.shared_update_policy == SharedUpdatePolicy::GeneratorOnly))
        for (auto& p : shared_params()) out.push_back(p);
    return out;
}

ParamList Trainer::optimizer_d_params() const {
    ParamList out = discriminator_exclusive_params();
    if (shared_ && (cfg_.shared_update_policy == SharedUpdatePolicy::Both ||
                    cfg_.shared_update_policy == SharedUpdatePolicy::DiscriminatorOnly))
        for (auto& p : shared_params()) out.push_back(p);
    return out;
}

void Trainer::build_optimizers() {
    AdamConfig ac{cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps, cfg_.clip_norm};
    opt_g_ = std::make_unique<Adam>(optimizer_g_params(), ac);
    const ParamList dp = optimizer_d_params();
    if (!dp.empty()) opt_d_ = std::make_unique<Adam>(dp, ac);
}

double Trainer::current_lr() const { return lr_at(step_, cfg_); }

Var Trainer::forward_sr(const Var& lr) const {
    if (shared_) return gen_->forward(shared_->extract(lr));
    return gen_->forward(lr);
}

Tensor Trainer::infer(const Tensor& lr_chw) const {
    if (lr_chw.ndim() != 3) throw std::invalid_argument("infer: expected {C,H,W}");
    Var in = make_constant(lr_chw.reshaped({1, lr_chw.dim(0), lr_chw.dim(1), lr_chw.dim(2)}));
    Tensor out = forward_sr(in)->value;
    Tensor img = out.reshaped({out.dim(1), out.dim(2), out.dim(3)});
    for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = std::clamp(img[i], 0.0, 1.0);
    return img;
}

void Trainer::record(StepLog& log) {
    for (const auto& [k, v] : log.values) {
        auto& slot = running_[k];
        slot.first += v;
        slot.second += 1;
    }
}

StepLog Trainer::pretrain_step(const Batch& batch) {
    const double lr_now = current_lr();
    opt_g_->zero_grad();
    if (opt_d_) opt_d_->zero_grad();
    Var lr_v = make_constant(batch.lr);
    Var hr_v = make_constant(batch.hr);
    Var sr = forward_sr(lr_v);
    Var loss = l1_content(sr, hr_v);
    check_finite(loss, "pretrain L1");
    backward(loss);
    opt_g_->step(lr_now);
    ++step_;

    StepLog log;
    log.step = step_;
    log.lr = lr_now;
    log.values = {{"l1", loss->value[0]}, {"l_total", loss->value[0]}};
    record(log);
    return log;
}

StepLog Trainer::gan_step(const Batch& batch) {
    if (cfg_.mode == TrainMode::PsnrPretrain)
        throw std::logic_error("gan_step: mode psnr-pretrain has no adversarial phase");
    const double lr_now = current_lr();
    StepLog log;
    log.lr = lr_now;

    Var lr_v = make_constant(batch.lr);
    Var hr_v = make_constant(batch.hr);
    auto disc_in = [&](const Var& img) { return shared_ ? shared_->extract(img) : img; };

    if (fgd_) {
        // --- discriminator update (generator frozen via detach) ---
        opt_g_->zero_grad();
        opt_d_->zero_grad();
        Var sr_detached = make_constant(forward_sr(lr_v)->value);
        FgOutput real = fgd_->forward(disc_in(hr_v));
        FgOutput fake = fgd_->forward(disc_in(sr_detached));
        if (!real.has_logit || !fake.has_logit)
            throw std::runtime_error(
                "gan_step: batch spatial size does not match the discriminator's configured "
                "input size; the FC score head cannot run");
        // Under the printed-sign convention the discriminator descends the
        // equations as written. Under bce_style the standard (negated) forms
        // are obtained by negating the *opposite* player's symmetric form:
        // descending the plain negation of the same form would reverse the
        // training direction.
        Var d_adv = cfg_.bce_style ? g_adversarial_entire(real.logit, fake.logit, true)
                                   : d_adversarial(real.logit, fake.logit);
        Var d_mask = cfg_.bce_style ? g_mask_loss(real.mask, fake.mask, true)
                                    : d_mask_loss(real.mask, fake.mask);
        Var d_total = add(d_adv, d_mask);
        check_finite(d_total, "discriminator loss");
        backward(d_total);
        opt_d_->step(lr_now);
        if (phase_hook) phase_hook("after_d");

        // --- generator update (discriminator-exclusive parameters frozen) ---
        opt_g_->zero_grad();
        opt_d_->zero_grad();
        Var sr = forward_sr(lr_v);
        FgOutput fake_g = fgd_->forward(disc_in(sr));
        FgOutput real_g = fgd_->forward(disc_in(hr_v));
        GeneratorLossParts parts;
        parts.l1 = l1_content(sr, hr_v);
        parts.adv_entire = cfg_.bce_style
                               ? d_adversarial(real_g.logit, fake_g.logit, true)
                               : g_adversarial_entire(real_g.logit, fake_g.logit);
        parts.adv_fine = cfg_.bce_style ? d_mask_loss(real_g.mask, fake_g.mask, true)
                                        : g_mask_loss(real_g.mask, fake_g.mask);
        if (cfg_.attention_enabled) {
            Var mask = fake_g.mask;
            if (mask->value.dim(1) == 1 && cfg_.channels > 1) {
                // replicate a 1-channel mask across image channels (constant weight)
                const Tensor& m = mask->value;
                Tensor rep({m.dim(0), cfg_.channels, m.dim(2), m.dim(3)});
                for (int n = 0; n < m.dim(0); ++n)
                    for (int c = 0; c < cfg_.channels; ++c)
                        for (int y = 0; y < m.dim(2); ++y)
                            for (int x = 0; x < m.dim(3); ++x)
                                rep.at4(n, c, y, x) = m.at4(n, 0, y, x);
                mask = make_constant(rep);
            }
            parts.attention = attention_l1(sr, hr_v, mask);
        }
        if (phi_) parts.percep = perceptual(sr, hr_v, *phi_);
        Var total = generator_total(parts, cfg_.weights);
        backward(total);
        opt_g_->step(lr_now);

        log.values.push_back({"l1", parts.l1->value[0]});
        if (phi_) log.values.push_back({"l_percep", parts.percep->value[0]});
        log.values.push_back({"l_adv_entire", parts.adv_entire->value[0]});
        log.values.push_back({"l_adv_fine", parts.adv_fine->value[0]});
        if (parts.attention) log.values.push_back({"l_attention", parts.attention->value[0]});
        log.values.push_back({"l_total", total->value[0]});
        log.values.push_back({"d_adv", d_adv->value[0]});
        log.values.push_back({"d_mask", d_mask->value[0]});
        if (phase_hook) phase_hook("after_g");
    } else {
        // --- Fs-SRGAN with the VGG-style discriminator ---
        opt_g_->zero_grad();
        opt_d_->zero_grad();
        Var sr_detached = make_constant(forward_sr(lr_v)->value);
        Var d_real = plain_->forward(disc_in(hr_v));
        Var d_fake = plain_->forward(disc_in(sr_detached));
        auto [loss_d_printed, unused_g] =
            plain_gan_losses(cfg_.bce_style ? d_fake : d_real,
                             cfg_.bce_style ? d_real : d_fake, cfg_.non_saturating_g);
        (void)unused_g;
        // bce_style: -[log(1-D(fake)) + log(D(real))] is the standard BCE form
        Var loss_d = cfg_.bce_style ? neg(loss_d_printed) : loss_d_printed;
        check_finite(loss_d, "discriminator loss");
        backward(loss_d);
        opt_d_->step(lr_now);
        if (phase_hook) phase_hook("after_d");

        opt_g_->zero_grad();
        opt_d_->zero_grad();
        Var sr = forward_sr(lr_v);
        Var d_fake_g = plain_->forward(disc_in(sr));
        Var loss_g = cfg_.non_saturating_g
                         ? neg(mean_all(log_clamped(d_fake_g, kLogFloor)))
                         : mean_all(log_clamped(add_scalar(neg(d_fake_g), 1.0), kLogFloor));
        GeneratorLossParts parts;
        parts.l1 = l1_content(sr, hr_v);
        parts.adv_entire = loss_g;
        if (phi_) parts.percep = perceptual(sr, hr_v, *phi_);
        Var total = generator_total(parts, cfg_.weights);
        backward(total);
        opt_g_->step(lr_now);

        log.values.push_back({"l1", parts.l1->value[0]});
        if (phi_) log.values.push_back({"l_percep", parts.percep->value[0]});
        log.values.push_back({"l_adv", loss_g->value[0]});
        log.values.push_back({"l_total", total->value[0]});
        log.values.push_back({"d_adv", loss_d->value[0]});
        if (phase_hook) phase_hook("after_g");
    }

    ++step_;
    log.step = step_;
    record(log);
    return log;
}

void Trainer::save_checkpoint(const std::string& path) const {
    ArchiveWriter w;
    auto& meta = w.meta();
    meta["format"] = kCheckpointFormat;
    meta["kind"] = "trainer";
    meta["config"] = cfg_.to_json();
    meta["step"] = step_;
    meta["rng"] = rng_.serialize();
    meta["optg_steps"] = opt_g_->steps_taken();
    if (opt_d_) meta["optd_steps"] = opt_d_->steps_taken();
    nlohmann::json run = nlohmann::json::object();
    for (const auto& [k, v] : running_) run[k] = {v.first, v.second};
    meta["running"] = run;

    for (const auto& p : all_params()) w.add_tensor(p.name, p.var->value);
    const ParamList gp = opt_g_->params();
    for (std::size_t i = 0; i < gp.size(); ++i) {
        w.add_tensor("optg.m1." + gp[i].name, const_cast<Adam&>(*opt_g_).moment1()[i]);
        w.add_tensor("optg.m2." + gp[i].name, const_cast<Adam&>(*opt_g_).moment2()[i]);
    }
    if (opt_d_) {
        const ParamList dp = opt_d_->params();
        for (std::size_t i = 0; i < dp.size(); ++i) {
            w.add_tensor("optd.m1." + dp[i].name, const_cast<Adam&>(*opt_d_).moment1()[i]);
            w.add_tensor("optd.m2." + dp[i].name, const_cast<Adam&>(*opt_d_).moment2()[i]);
        }
    }
    w.save(path);
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& path) {
    const Archive a = Archive::load(path);
    const auto& meta = a.meta();
    if (meta.value("format", -1) != kCheckpointFormat || meta.value("kind", "") != "trainer")
        throw std::runtime_error("resume: " + path + " is not a trainer checkpoint");
    auto t = std::make_unique<Trainer>(TrainConfig::from_json(meta.at("config")));
    for (auto& p : t->all_params()) {
        if (!a.has(p.name))
            throw std::runtime_error("resume: checkpoint is missing parameter " + p.name +
                                     " (config/manifest mismatch)");
        const Tensor& stored = a.tensor(p.name);
        if (stored.shape() != p.var->value.shape())
            throw std::runtime_error("resume: shape mismatch for " + p.name);
        p.var->value = stored;
        p.var->zero_grad();
    }
    auto load_moments = [&a](Adam& opt, const std::string& prefix) {
        const ParamList& ps = opt.params();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            opt.moment1()[i] = a.tensor(prefix + ".m1." + ps[i].name);
            opt.moment2()[i] = a.tensor(prefix + ".m2." + ps[i].name);
        }
    };
    load_moments(*t->opt_g_, "optg");
    t->opt_g_->set_steps_taken(meta.value("optg_steps", std::int64_t{0}));
    if (t->opt_d_) {
        load_moments(*t->opt_d_, "optd");
        t->opt_d_->set_steps_taken(meta.value("optd_steps", std::int64_t{0}));
    }
    t->step_ = meta.value("step", std::int64_t{0});
    t->rng_.deserialize(meta.at("rng").get<std::string>());
    if (meta.contains("running"))
        for (auto it = meta.at("running").begin(); it != meta.at("running").end(); ++it)
            t->running_[it.key()] = {it.value()[0].get<double>(),
                                     it.value()[1].get<std::int64_t>()};
    return t;
}

Tensor upscale_tiled(const std::function<Tensor(const Tensor&)>& sr_fn, const Tensor& lr,
                     int scale, int tile, int overlap) {
    if (lr.ndim() != 3) throw std::invalid_argument("upscale_tiled: expected {C,H,W}");
    const int core = tile - 2 * overlap;
    if (core < 1) throw std::invalid_argument("upscale_tiled: tile must exceed 2*overlap");
    const int c = lr.dim(0), h = lr.dim(1), w = lr.dim(2);
    if (h <= tile && w <= tile) return sr_fn(lr);

    Tensor out({c, h * scale, w * scale});
    for (int cy = 0; cy < h; cy += core) {
        const int cyh = std::min(core, h - cy);
        const int ey0 = std::max(0, cy - overlap);
        const int ey1 = std::min(h, cy + cyh + overlap);
        for (int cx = 0; cx < w; cx += core) {
            const int cxw = std::min(core, w - cx);
            const int ex0 = std::max(0, cx - overlap);
            const int ex1 = std::min(w, cx + cxw + overlap);
            Tensor patch({c, ey1 - ey0, ex1 - ex0});
            for (int ch = 0; ch < c; ++ch)
                for (int y = ey0; y < ey1; ++y)
                    for (int x = ex0; x < ex1; ++x)
                        patch.at3(ch, y - ey0, x - ex0) = lr.at3(ch, y, x);
            const Tensor up = sr_fn(patch);
            const int oy = (cy - ey0) * scale, ox = (cx - ex0) * scale;
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < cyh * scale; ++y)
                    for (int x = 0; x < cxw * scale; ++x)
                        out.at3(ch, cy * scale + y, cx * scale + x) =
                            up.at3(ch, oy + y, ox + x);
        }
    }
    return out;
}

Tensor SrModel::upscale(const Tensor& lr_chw, int tile) const {
    auto run = [this](const Tensor& patch) {
        Var in = make_constant(patch.reshaped({1, patch.dim(0), patch.dim(1), patch.dim(2)}));
        Var sr = shared ? gen->forward(shared->extract(in)) : gen->forward(in);
        const Tensor& v = sr->value;
        return v.reshaped({v.dim(1), v.dim(2), v.dim(3)});
    };
    Tensor out = tile > 0 ? upscale_tiled(run, lr_chw, scale, tile) : run(lr_chw);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
    return out;
}

SrModel SrModel::load(const std::string& checkpoint_path) {
    const Archive a = Archive::load(checkpoint_path);
    const auto& meta = a.meta();
    if (!meta.contains("config"))
        throw std::runtime_error("SrModel: " + checkpoint_path + " carries no config manifest");
    const TrainConfig cfg = TrainConfig::from_json(meta.at("config"));
    Rng rng(cfg.seed);

    SrModel m;
    m.scale = cfg.scale;
    const bool fs = cfg.mode == TrainMode::FsSrgan || cfg.mode == TrainMode::FaFsSrgan;
    if (fs) {
        SharedExtractorConfig sc = cfg.shared_cfg;
        sc.channels = cfg.channels;
        m.shared = std::make_shared<SharedExtractor>(sc, rng);
    }
    GeneratorConfig gc;
    gc.channels = cfg.channels;
    gc.scale = cfg.scale;
    gc.trunk = cfg.gen_trunk;
    gc.external_features = fs;
    if (fs) gc.trunk.num_features = cfg.shared_cfg.num_features;
    m.gen = std::make_shared<GeneratorNet>(gc, rng);

    ParamList params = m.gen->parameters("gen");
    if (m.shared)
        for (auto& p : m.shared->parameters("shared")) params.push_back(p);
    for (auto& p : params) {
        if (!a.has(p.name))
            throw std::runtime_error("SrModel: checkpoint is missing " + p.name);
        p.var->value = a.tensor(p.name);
    }
    return m;
}

}  // namespace fgsr

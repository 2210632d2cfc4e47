#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fgsr/autodiff.hpp"
#include "fgsr/rng.hpp"

namespace fgsr {

inline constexpr double kLogFloor = 1e-12;

struct LossWeights {
    double lambda1 = 5e-3;  // adversarial
    double lambda2 = 1.0;   // attention
    double lambda3 = 1.0;   // perceptual

    void validate() const;
};

// Frozen feature map for the perceptual loss. Implementations never receive
// gradient updates; gradient still flows through them into the SR image.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual Var features(const Var& img) const = 0;
    virtual std::string name() const = 0;
};

class IdentityFeatures final : public FeatureExtractor {
public:
    Var features(const Var& img) const override { return img; }
    std::string name() const override { return "identity"; }
};

// Small fixed random conv stack; deterministic for a given seed. Lets the
// perceptual term run without any external weights.
class ConvStubFeatures final : public FeatureExtractor {
public:
    explicit ConvStubFeatures(int in_channels = 3, std::uint64_t seed = 17);
    Var features(const Var& img) const override;
    std::string name() const override { return "conv-stub"; }

private:
    std::vector<Var> weights_, biases_;
};

// Conv stack loaded from a checkpoint archive (e.g. a converted VGG-19 tap up
// to the 4th conv of the 5th stage, pre-activation). Layers run as
// conv+ReLU with 2x max pooling between stages; the final conv is left
// pre-activation.
class LoadedFeatureNet final : public FeatureExtractor {
public:
    struct Layer {
        Var w, b;
        bool pool_before = false;
        bool activate = true;
    };
    explicit LoadedFeatureNet(std::vector<Layer> layers, std::string label);
    Var features(const Var& img) const override;
    std::string name() const override { return label_; }

    static std::unique_ptr<LoadedFeatureNet> load(const std::string& path);

private:
    std::vector<Layer> layers_;
    std::string label_;
};

// --- loss family -----------------------------------------------------------

Var l1_content(const Var& sr, const Var& hr);

// (1 - M_f) weighted L1; the mask is detached and acts as a constant weight.
Var attention_l1(const Var& sr, const Var& hr, const Var& mask_fake);

Var perceptual(const Var& sr, const Var& hr, const FeatureExtractor& phi);

// Relativistic adversarial pair: sigma(c - mean(opposite batch)).
std::pair<Var, Var> relativistic_pair(const Var& c_real, const Var& c_fake);

// Printed-sign convention by default (minimizing drives the optimum);
// bce_style negates, giving the familiar binary-cross-entropy form.
Var d_adversarial(const Var& c_real, const Var& c_fake, bool bce_style = false);
Var g_adversarial_entire(const Var& c_real, const Var& c_fake, bool bce_style = false);
Var d_mask_loss(const Var& mask_real, const Var& mask_fake, bool bce_style = false);
Var g_mask_loss(const Var& mask_real, const Var& mask_fake, bool bce_style = false);

// Returns {loss_d, loss_g}. The generator side defaults to the
// non-saturating -log D(fake) variant.
std::pair<Var, Var> plain_gan_losses(const Var& d_real, const Var& d_fake,
                                     bool non_saturating_g = true);

// Null entries are simply absent from the sum.
struct GeneratorLossParts {
    Var l1;
    Var adv_entire;
    Var adv_fine;
    Var attention;
    Var percep;
};

Var generator_total(const GeneratorLossParts& parts, const LossWeights& weights);

}  // namespace fgsr

#include "fgsr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace fgsr {

namespace {

void check_shapes(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a->value.shape()) + " vs " +
                                    Tensor::shape_str(b->value.shape()));
}

void check_nonempty(const Var& a, const char* op) {
    if (a->value.numel() == 0)
        throw std::invalid_argument(std::string(op) + ": empty batch");
}

double finite_or_throw(const Var& v, const char* what) {
    const double x = v->value[0];
    if (!std::isfinite(x))
        throw std::runtime_error(std::string("training divergence: non-finite ") + what +
                                 " loss (" + std::to_string(x) + ")");
    return x;
}

Var one_minus(const Var& x) { return add_scalar(neg(x), 1.0); }

}  // namespace

void LossWeights::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
        throw std::invalid_argument("LossWeights: weights must be >= 0");
}

ConvStubFeatures::ConvStubFeatures(int in_channels, std::uint64_t seed) {
    Rng rng(seed);
    const int mid = 8;
    auto init = [&rng](std::vector<int> shape, int fan_in) {
        Tensor t(std::move(shape));
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
        return t;
    };
    weights_.push_back(make_constant(init({mid, in_channels, 3, 3}, in_channels * 9)));
    biases_.push_back(make_constant(Tensor::zeros({mid})));
    weights_.push_back(make_constant(init({mid, mid, 3, 3}, mid * 9)));
    biases_.push_back(make_constant(Tensor::zeros({mid})));
}

Var ConvStubFeatures::features(const Var& img) const {
    Var x = leaky_relu(conv2d(img, weights_[0], biases_[0]), 0.2);
    return conv2d(x, weights_[1], biases_[1]);
}

LoadedFeatureNet::LoadedFeatureNet(std::vector<Layer> layers, std::string label)
    : layers_(std::move(layers)), label_(std::move(label)) {
    if (layers_.empty()) throw std::invalid_argument("LoadedFeatureNet: no layers");
}

Var LoadedFeatureNet::features(const Var& img) const {
    Var x = img;
    for (const auto& l : layers_) {
        if (l.pool_before) x = maxpool2x(x);
        x = conv2d(x, l.w, l.b);
        if (l.activate) x = leaky_relu(x, 0.0);  // plain ReLU
    }
    return x;
}

Var l1_content(const Var& sr, const Var& hr) {
    check_shapes(sr, hr, "l1_content");
    return mean_all(abs_op(sub(sr, hr)));
}

Var attention_l1(const Var& sr, const Var& hr, const Var& mask_fake) {
    check_shapes(sr, hr, "attention_l1");
    check_shapes(sr, mask_fake, "attention_l1");
    Var weight = one_minus(detach(mask_fake));
    return mean_all(mul(weight, abs_op(sub(sr, hr))));
}

Var perceptual(const Var& sr, const Var& hr, const FeatureExtractor& phi) {
    check_shapes(sr, hr, "perceptual");
    return mean_all(abs_op(sub(phi.features(sr), phi.features(hr))));
}

std::pair<Var, Var> relativistic_pair(const Var& c_real, const Var& c_fake) {
    check_nonempty(c_real, "relativistic_pair");
    check_nonempty(c_fake, "relativistic_pair");
    Var d_real_rel = sigmoid(sub_broadcast_scalar(c_real, mean_all(c_fake)));
    Var d_fake_rel = sigmoid(sub_broadcast_scalar(c_fake, mean_all(c_real)));
    return {d_real_rel, d_fake_rel};
}

Var d_adversarial(const Var& c_real, const Var& c_fake, bool bce_style) {
    auto [d_real_rel, d_fake_rel] = relativistic_pair(c_real, c_fake);
    Var loss = add(mean_all(log_clamped(one_minus(d_real_rel), kLogFloor)),
                   mean_all(log_clamped(d_fake_rel, kLogFloor)));
    return bce_style ? neg(loss) : loss;
}

Var g_adversarial_entire(const Var& c_real, const Var& c_fake, bool bce_style) {
    auto [d_real_rel, d_fake_rel] = relativistic_pair(c_real, c_fake);
    Var loss = add(mean_all(log_clamped(d_real_rel, kLogFloor)),
                   mean_all(log_clamped(one_minus(d_fake_rel), kLogFloor)));
    return bce_style ? neg(loss) : loss;
}

Var d_mask_loss(const Var& mask_real, const Var& mask_fake, bool bce_style) {
    check_shapes(mask_real, mask_fake, "d_mask_loss");
    Var loss = add(mean_all(log_clamped(one_minus(mask_real), kLogFloor)),
                   mean_all(log_clamped(mask_fake, kLogFloor)));
    return bce_style ? neg(loss) : loss;
}

Var g_mask_loss(const Var& mask_real, const Var& mask_fake, bool bce_style) {
    check_shapes(mask_real, mask_fake, "g_mask_loss");
    Var loss = add(mean_all(log_clamped(mask_real, kLogFloor)),
                   mean_all(log_clamped(one_minus(mask_fake), kLogFloor)));
    return bce_style ? neg(loss) : loss;
}

std::pair<Var, Var> plain_gan_losses(const Var& d_real, const Var& d_fake,
                                     bool non_saturating_g) {
    check_nonempty(d_real, "plain_gan_losses");
    check_nonempty(d_fake, "plain_gan_losses");
    Var loss_d = add(mean_all(log_clamped(add_scalar(neg(d_real), 1.0), kLogFloor)),
                     mean_all(log_clamped(d_fake, kLogFloor)));
    Var loss_g = non_saturating_g
                     ? neg(mean_all(log_clamped(d_fake, kLogFloor)))
                     : mean_all(log_clamped(add_scalar(neg(d_fake), 1.0), kLogFloor));
    return {loss_d, loss_g};
}

Var generator_total(const GeneratorLossParts& parts, const LossWeights& weights) {
    weights.validate();
    if (!parts.l1) throw std::invalid_argument("generator_total: l1 part is required");
    finite_or_throw(parts.l1, "l1");
    Var total = parts.l1;
    Var adv;
    if (parts.adv_entire) {
        finite_or_throw(parts.adv_entire, "adv_entire");
        adv = parts.adv_entire;
    }
    if (parts.adv_fine) {
        finite_or_throw(parts.adv_fine, "adv_fine");
        adv = adv ? add(adv, parts.adv_fine) : parts.adv_fine;
    }
    if (adv) total = add(total, scale(adv, weights.lambda1));
    if (parts.attention) {
        finite_or_throw(parts.attention, "attention");
        total = add(total, scale(parts.attention, weights.lambda2));
    }
    if (parts.percep) {
        finite_or_throw(parts.percep, "perceptual");
        total = add(total, scale(parts.percep, weights.lambda3));
    }
    finite_or_throw(total, "total generator");
    return total;
}

}  // namespace fgsr

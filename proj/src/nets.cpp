#include "fgsr/nets.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace fgsr {

namespace {

Tensor kaiming_normal(Rng& rng, std::vector<int> shape, int fan_in, double gain) {
    Tensor t(std::move(shape));
    const double stddev = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

bool is_power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

int ceil_to_multiple(int v, int m) { return ((v + m - 1) / m) * m; }

}  // namespace

std::int64_t count_parameters(const ParamList& params) {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.var->value.numel();
    return n;
}

Conv2dLayer Conv2dLayer::create(Rng& rng, int in_ch, int out_ch, int k, double gain, int stride,
                                int pad) {
    Conv2dLayer l;
    l.w = make_param(kaiming_normal(rng, {out_ch, in_ch, k, k}, in_ch * k * k, gain));
    l.b = make_param(Tensor::zeros({out_ch}));
    l.stride = stride;
    l.pad = pad;
    return l;
}

void Conv2dLayer::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", w});
    out.push_back({prefix + ".bias", b});
}

LinearLayer LinearLayer::create(Rng& rng, int in_dim, int out_dim, double gain) {
    LinearLayer l;
    l.w = make_param(kaiming_normal(rng, {out_dim, in_dim}, in_dim, gain));
    l.b = make_param(Tensor::zeros({out_dim}));
    return l;
}

void LinearLayer::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", w});
    out.push_back({prefix + ".bias", b});
}

DenseBlock DenseBlock::create(Rng& rng, int features, int growth, double residual_scale,
                              double gain) {
    DenseBlock d;
    d.residual_scale = residual_scale;
    for (int i = 0; i < 5; ++i) {
        const int in_ch = features + i * growth;
        const int out_ch = (i == 4) ? features : growth;
        d.convs.push_back(Conv2dLayer::create(rng, in_ch, out_ch, 3, gain));
    }
    return d;
}

Var DenseBlock::operator()(const Var& x) const {
    Var cat = x;
    Var y;
    for (int i = 0; i < 4; ++i) {
        y = leaky_relu(convs[static_cast<std::size_t>(i)](cat), lrelu_slope);
        cat = concat_channels(cat, y);
    }
    y = convs[4](cat);
    return add(x, scale(y, residual_scale));
}

void DenseBlock::collect(ParamList& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < convs.size(); ++i)
        convs[i].collect(out, prefix + ".conv" + std::to_string(i + 1));
}

Rrdb Rrdb::create(Rng& rng, int features, int growth, double residual_scale, double gain) {
    Rrdb r;
    r.residual_scale = residual_scale;
    for (int i = 0; i < 3; ++i)
        r.dense.push_back(DenseBlock::create(rng, features, growth, residual_scale, gain));
    return r;
}

Var Rrdb::operator()(const Var& x) const {
    Var y = dense[0](x);
    y = dense[1](y);
    y = dense[2](y);
    // x + s * inner(x), where inner is the trunk's residual contribution, so a
    // zero-weight trunk is an exact identity
    return add(x, scale(sub(y, x), residual_scale));
}

void Rrdb::collect(ParamList& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < dense.size(); ++i)
        dense[i].collect(out, prefix + ".db" + std::to_string(i + 1));
}

GeneratorNet::GeneratorNet(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (!is_power_of_two(cfg.scale))
        throw std::invalid_argument("GeneratorNet: only power-of-two scales are supported");
    if (cfg.trunk.num_blocks < 0)
        throw std::invalid_argument("GeneratorNet: negative num_blocks");
    const int f = cfg.trunk.num_features;
    if (!cfg.external_features)
        conv_first_ = Conv2dLayer::create(rng, cfg.channels, f, 3, 1.0);
    for (int i = 0; i < cfg.trunk.num_blocks; ++i)
        blocks_.push_back(Rrdb::create(rng, f, cfg.trunk.growth, cfg.trunk.residual_scale, 0.1));
    trunk_conv_ = Conv2dLayer::create(rng, f, f, 3, 0.1);
    num_up_stages_ = 0;
    for (int s = cfg.scale; s > 1; s /= 2) ++num_up_stages_;
    for (int i = 0; i < num_up_stages_; ++i)
        up_convs_.push_back(Conv2dLayer::create(rng, f, f, 3, 1.0));
    conv_hr_ = Conv2dLayer::create(rng, f, f, 3, 1.0);
    conv_last_ = Conv2dLayer::create(rng, f, cfg.channels, 3, 1.0);
}

Var GeneratorNet::forward(const Var& input) const {
    const Tensor& v = input->value;
    if (v.ndim() != 4) throw std::invalid_argument("GeneratorNet: expected NCHW input");
    const int f = cfg_.trunk.num_features;
    Var feat;
    if (cfg_.external_features) {
        if (v.dim(1) != f)
            throw std::invalid_argument("GeneratorNet: expected " + std::to_string(f) +
                                        " feature channels, got " + std::to_string(v.dim(1)));
        feat = input;
    } else {
        if (v.dim(1) != cfg_.channels)
            throw std::invalid_argument("GeneratorNet: expected " + std::to_string(cfg_.channels) +
                                        " image channels, got " + std::to_string(v.dim(1)));
        feat = conv_first_(input);
    }
    Var x = feat;
    for (const auto& blk : blocks_) x = blk(x);
    x = add(feat, trunk_conv_(x));  // global residual over the deep trunk
    for (const auto& up : up_convs_)
        x = leaky_relu(up(upsample_nearest2x(x)), 0.2);
    x = leaky_relu(conv_hr_(x), 0.2);
    return conv_last_(x);
}

ParamList GeneratorNet::parameters(const std::string& prefix) const {
    ParamList out;
    if (!cfg_.external_features) conv_first_.collect(out, prefix + ".conv_first");
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].collect(out, prefix + ".rrdb" + std::to_string(i + 1));
    trunk_conv_.collect(out, prefix + ".trunk_conv");
    for (std::size_t i = 0; i < up_convs_.size(); ++i)
        up_convs_[i].collect(out, prefix + ".up" + std::to_string(i + 1));
    conv_hr_.collect(out, prefix + ".conv_hr");
    conv_last_.collect(out, prefix + ".conv_last");
    return out;
}

SharedExtractor::SharedExtractor(const SharedExtractorConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.num_rrdbs < 1)
        throw std::invalid_argument("SharedExtractor: E must be >= 1");
    entry_conv_ = Conv2dLayer::create(rng, cfg.channels, cfg.num_features, 3, 1.0);
    for (int i = 0; i < cfg.num_rrdbs; ++i)
        blocks_.push_back(
            Rrdb::create(rng, cfg.num_features, cfg.growth, cfg.residual_scale, 0.1));
}

Var SharedExtractor::extract(const Var& x) const {
    const Tensor& v = x->value;
    if (v.ndim() != 4 || v.dim(1) != cfg_.channels)
        throw std::invalid_argument("SharedExtractor: expected " +
                                    std::to_string(cfg_.channels) + "-channel NCHW input");
    Var y = entry_conv_(x);
    for (const auto& blk : blocks_) y = blk(y);
    return y;
}

ParamList SharedExtractor::parameters(const std::string& prefix) const {
    ParamList out;
    entry_conv_.collect(out, prefix + ".entry_conv");
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].collect(out, prefix + ".rrdb" + std::to_string(i + 1));
    return out;
}

bool assert_shared(const ParamList& gen_path, const ParamList& disc_path) {
    if (gen_path.empty() || gen_path.size() != disc_path.size()) return false;
    std::unordered_map<std::string, const Node*> by_name;
    for (const auto& p : gen_path) by_name[p.name] = p.var.get();
    for (const auto& p : disc_path) {
        auto it = by_name.find(p.name);
        if (it == by_name.end() || it->second != p.var.get()) return false;
    }
    return true;
}

FineGrainedDiscriminator::FineGrainedDiscriminator(const FineGrainedDiscriminatorConfig& cfg,
                                                   Rng& rng)
    : cfg_(cfg) {
    if (cfg.depth < 1) throw std::invalid_argument("FineGrainedDiscriminator: depth must be >= 1");
    if (cfg.input_size % (1 << cfg.depth) != 0)
        throw std::invalid_argument(
            "FineGrainedDiscriminator: input_size must be divisible by 2^depth");
    for (int i = 0; i < cfg.depth; ++i)
        stage_ch_.push_back(std::min(cfg.base_channels << i, cfg.max_channels));
    for (int i = 0; i < cfg.depth; ++i) {
        const int in_ch = (i == 0) ? cfg.in_channels : stage_ch_[static_cast<std::size_t>(i - 1)];
        enc_convs_.push_back(
            Conv2dLayer::create(rng, in_ch, stage_ch_[static_cast<std::size_t>(i)], 3, 1.0));
    }
    // Decoder convs indexed by the encoder stage they attach to. The tensor
    // arriving at stage i always carries stage_ch[i] channels, so after the
    // skip concatenation the input is doubled.
    dec_convs_.resize(static_cast<std::size_t>(cfg.depth));
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int in_ch = 2 * stage_ch_[static_cast<std::size_t>(i)];
        const int out_ch = (i > 0) ? stage_ch_[static_cast<std::size_t>(i - 1)] : cfg.base_channels;
        dec_convs_[static_cast<std::size_t>(i)] = Conv2dLayer::create(rng, in_ch, out_ch, 3, 1.0);
    }
    mask_conv_ = Conv2dLayer::create(rng, cfg.base_channels, cfg.mask_channels, 3, 1.0);
    const int bottleneck = cfg.input_size >> cfg.depth;
    const int flat = stage_ch_.back() * bottleneck * bottleneck;
    fc1_ = LinearLayer::create(rng, flat, cfg.fc_hidden, 1.0);
    fc2_ = LinearLayer::create(rng, cfg.fc_hidden, 1, 1.0);
}

FgOutput FineGrainedDiscriminator::forward(const Var& x) const {
    const Tensor& v = x->value;
    if (v.ndim() != 4 || v.dim(1) != cfg_.in_channels)
        throw std::invalid_argument("FineGrainedDiscriminator: expected " +
                                    std::to_string(cfg_.in_channels) + "-channel NCHW input");
    const int h = v.dim(2), w = v.dim(3);
    const int mult = 1 << cfg_.depth;
    const int hp = ceil_to_multiple(h, mult), wp = ceil_to_multiple(w, mult);
    Var cur = x;
    if (hp != h || wp != w) cur = reflect_pad2d(cur, 0, hp - h, 0, wp - w);

    std::vector<Var> skips;
    for (int i = 0; i < cfg_.depth; ++i) {
        cur = leaky_relu(enc_convs_[static_cast<std::size_t>(i)](cur), cfg_.lrelu_slope);
        skips.push_back(cur);
        cur = maxpool2x(cur);
    }

    FgOutput out;
    if (hp == cfg_.input_size && wp == cfg_.input_size) {
        const Tensor& bv = cur->value;
        Var flat = reshape(cur, {bv.dim(0), bv.dim(1) * bv.dim(2) * bv.dim(3)});
        out.logit = fc2_(leaky_relu(fc1_(flat), cfg_.lrelu_slope));
        out.has_logit = true;
    }

    Var dec = cur;
    for (int i = cfg_.depth - 1; i >= 0; --i) {
        dec = upsample_nearest2x(dec);
        dec = concat_channels(dec, skips[static_cast<std::size_t>(i)]);
        dec = leaky_relu(dec_convs_[static_cast<std::size_t>(i)](dec), cfg_.lrelu_slope);
    }
    Var mask = sigmoid(mask_conv_(dec));
    if (hp != h || wp != w) mask = crop2d(mask, 0, 0, h, w);
    out.mask = mask;
    return out;
}

ParamList FineGrainedDiscriminator::parameters(const std::string& prefix) const {
    ParamList out;
    for (std::size_t i = 0; i < enc_convs_.size(); ++i)
        enc_convs_[i].collect(out, prefix + ".encoder.conv" + std::to_string(i + 1));
    for (std::size_t i = 0; i < dec_convs_.size(); ++i)
        dec_convs_[i].collect(out, prefix + ".decoder.conv" + std::to_string(i + 1));
    mask_conv_.collect(out, prefix + ".mask_head.conv");
    fc1_.collect(out, prefix + ".score_head.fc1");
    fc2_.collect(out, prefix + ".score_head.fc2");
    return out;
}

PlainDiscriminator::PlainDiscriminator(const PlainDiscriminatorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
    if (cfg.num_stages < 1)
        throw std::invalid_argument("PlainDiscriminator: num_stages must be >= 1");
    if (cfg.input_size % (1 << cfg.num_stages) != 0)
        throw std::invalid_argument(
            "PlainDiscriminator: input_size must be divisible by 2^num_stages");
    int prev = cfg.in_channels;
    for (int i = 0; i < cfg.num_stages; ++i) {
        const int ch = std::min(cfg.base_channels << i, cfg.max_channels);
        convs_.push_back(Conv2dLayer::create(rng, prev, ch, 3, 1.0, 1, 1));
        convs_.push_back(Conv2dLayer::create(rng, ch, ch, 3, 1.0, 2, 1));  // stride-2 in place of pooling
        prev = ch;
    }
    tail_conv_ = Conv2dLayer::create(rng, prev, 32, 3, 1.0);
    const int final_size = cfg.input_size >> cfg.num_stages;
    fc1_ = LinearLayer::create(rng, 32 * final_size * final_size, cfg.fc_hidden, 1.0);
    fc2_ = LinearLayer::create(rng, cfg.fc_hidden, 1, 1.0);
}

Var PlainDiscriminator::forward(const Var& x) const {
    const Tensor& v = x->value;
    if (v.ndim() != 4 || v.dim(1) != cfg_.in_channels)
        throw std::invalid_argument("PlainDiscriminator: expected " +
                                    std::to_string(cfg_.in_channels) + "-channel NCHW input");
    if (v.dim(2) != cfg_.input_size || v.dim(3) != cfg_.input_size)
        throw std::invalid_argument("PlainDiscriminator: input must be " +
                                    std::to_string(cfg_.input_size) + "x" +
                                    std::to_string(cfg_.input_size) +
                                    " (the FC head is built for a fixed size)");
    Var cur = x;
    for (const auto& c : convs_) cur = leaky_relu(c(cur), cfg_.lrelu_slope);
    cur = leaky_relu(tail_conv_(cur), cfg_.lrelu_slope);
    const Tensor& tv = cur->value;
    Var flat = reshape(cur, {tv.dim(0), tv.dim(1) * tv.dim(2) * tv.dim(3)});
    return sigmoid(fc2_(leaky_relu(fc1_(flat), cfg_.lrelu_slope)));
}

ParamList PlainDiscriminator::parameters(const std::string& prefix) const {
    ParamList out;
    for (std::size_t i = 0; i < convs_.size(); ++i)
        convs_[i].collect(out, prefix + ".conv" + std::to_string(i + 1));
    tail_conv_.collect(out, prefix + ".tail_conv");
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
    return out;
}

}  // namespace fgsr

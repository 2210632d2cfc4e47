#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fgsr/autodiff.hpp"
#include "fgsr/rng.hpp"

namespace fgsr {

struct NamedParam {
    std::string name;
    Var var;
};
using ParamList = std::vector<NamedParam>;

std::int64_t count_parameters(const ParamList& params);

struct Conv2dLayer {
    Var w, b;
    int stride = 1;
    int pad = 1;

    static Conv2dLayer create(Rng& rng, int in_ch, int out_ch, int k, double gain,
                              int stride = 1, int pad = 1);
    Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }
    void collect(ParamList& out, const std::string& prefix) const;
};

struct LinearLayer {
    Var w, b;

    static LinearLayer create(Rng& rng, int in_dim, int out_dim, double gain);
    Var operator()(const Var& x) const { return linear(x, w, b); }
    void collect(ParamList& out, const std::string& prefix) const;
};

// Five-conv dense block with internal residual, the RRDB building unit.
struct DenseBlock {
    std::vector<Conv2dLayer> convs;  // 5 convs
    double residual_scale = 0.2;
    double lrelu_slope = 0.2;

    static DenseBlock create(Rng& rng, int features, int growth, double residual_scale,
                             double gain);
    Var operator()(const Var& x) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

struct Rrdb {
    std::vector<DenseBlock> dense;  // 3 blocks
    double residual_scale = 0.2;

    static Rrdb create(Rng& rng, int features, int growth, double residual_scale, double gain);
    Var operator()(const Var& x) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

struct RrdbConfig {
    int num_features = 64;
    int growth = 32;
    int num_blocks = 23;
    double residual_scale = 0.2;
};

struct GeneratorConfig {
    int channels = 3;
    int scale = 4;
    RrdbConfig trunk;
    // When true the net consumes pre-extracted features of num_features
    // channels and has no first conv of its own.
    bool external_features = false;
};

class GeneratorNet {
public:
    GeneratorNet(const GeneratorConfig& cfg, Rng& rng);

    Var forward(const Var& input) const;
    ParamList parameters(const std::string& prefix = "gen") const;
    const GeneratorConfig& config() const { return cfg_; }

private:
    GeneratorConfig cfg_;
    Conv2dLayer conv_first_;  // absent when external_features
    std::vector<Rrdb> blocks_;
    Conv2dLayer trunk_conv_;
    std::vector<Conv2dLayer> up_convs_;
    Conv2dLayer conv_hr_, conv_last_;
    int num_up_stages_ = 0;
};

struct SharedExtractorConfig {
    int channels = 3;
    int num_features = 64;
    int growth = 32;
    int num_rrdbs = 1;  // E
    double residual_scale = 0.2;
};

// Fs-SRGAN shallow extractor. One parameter set; generator and discriminator
// paths hold a shared_ptr to the same instance.
class SharedExtractor {
public:
    SharedExtractor(const SharedExtractorConfig& cfg, Rng& rng);

    Var extract(const Var& x) const;
    ParamList parameters(const std::string& prefix = "shared") const;
    const SharedExtractorConfig& config() const { return cfg_; }

private:
    SharedExtractorConfig cfg_;
    Conv2dLayer entry_conv_;
    std::vector<Rrdb> blocks_;
};

// True iff both lists reference the identical parameter storage, name by name.
bool assert_shared(const ParamList& gen_path, const ParamList& disc_path);

struct FineGrainedDiscriminatorConfig {
    int in_channels = 3;
    int mask_channels = 3;
    int base_channels = 64;
    int max_channels = 512;
    int depth = 4;          // pooling stages
    int input_size = 192;   // fixed size the FC score head is built for
    int fc_hidden = 100;
    double lrelu_slope = 0.2;
};

struct FgOutput {
    Var logit;  // {N,1} pre-sigmoid; null when the score head cannot run
    Var mask;   // {N,mask_channels,H,W} in (0,1)
    bool has_logit = false;
};

// Unet-like discriminator: encoder + FC score head, decoder + sigmoid mask
// head with skip concatenations. Inputs not divisible by 2^depth are
// reflection-padded and the mask is cropped back.
class FineGrainedDiscriminator {
public:
    FineGrainedDiscriminator(const FineGrainedDiscriminatorConfig& cfg, Rng& rng);

    FgOutput forward(const Var& x) const;
    ParamList parameters(const std::string& prefix = "disc") const;
    const FineGrainedDiscriminatorConfig& config() const { return cfg_; }
    int stage_channels(int i) const { return stage_ch_.at(static_cast<std::size_t>(i)); }

private:
    FineGrainedDiscriminatorConfig cfg_;
    std::vector<int> stage_ch_;
    std::vector<Conv2dLayer> enc_convs_;
    std::vector<Conv2dLayer> dec_convs_;
    Conv2dLayer mask_conv_;
    LinearLayer fc1_, fc2_;
};

struct PlainDiscriminatorConfig {
    int in_channels = 3;
    int base_channels = 64;
    int max_channels = 512;
    int num_stages = 4;     // stride-2 reductions
    int input_size = 192;   // fixed size the FC head is built for
    int fc_hidden = 100;
    double lrelu_slope = 0.2;
};

// VGG-style discriminator: stride-2 convs in place of pooling, a tail conv
// flattened into a vector, then two FC layers and a sigmoid.
class PlainDiscriminator {
public:
    PlainDiscriminator(const PlainDiscriminatorConfig& cfg, Rng& rng);

    Var forward(const Var& x) const;  // {N,1} probabilities in [0,1]
    ParamList parameters(const std::string& prefix = "disc") const;
    const PlainDiscriminatorConfig& config() const { return cfg_; }

private:
    PlainDiscriminatorConfig cfg_;
    std::vector<Conv2dLayer> convs_;
    Conv2dLayer tail_conv_;
    LinearLayer fc1_, fc2_;
};

}  // namespace fgsr

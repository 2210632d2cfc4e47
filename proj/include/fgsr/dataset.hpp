#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fgsr/rng.hpp"
#include "fgsr/tensor.hpp"

namespace fgsr {

// Aligned LR/HR pair; tensors are {C,H,W} in [0,1].
struct ImagePair {
    Tensor lr;
    Tensor hr;
    int scale = 4;
    std::string id;

    void validate() const;
};

struct DatasetConfig {
    std::string hr_dir;
    std::optional<std::string> lr_dir;  // expects <lr_dir>/X<scale>/<stem>.png
    int scale = 4;
    int patch_size_lr = 48;
    int batch_size = 16;
    bool augment = true;
};

// Loads every *.png under hr_dir (sorted by stem), center-crops HR to
// scale-divisibility and pairs it with the pre-generated LR when present,
// synthesizing it by bicubic downscaling otherwise.
std::vector<ImagePair> load_corpus(const DatasetConfig& cfg);

ImagePair random_patch(const ImagePair& pair, int patch_size_lr, Rng& rng);
ImagePair augment_pair(const ImagePair& pair, Rng& rng);
ImagePair apply_dihedral(const ImagePair& pair, int k);

struct Batch {
    Tensor lr;  // {N,C,h,w}
    Tensor hr;  // {N,C,h*r,w*r}
};

Batch stack_pairs(const std::vector<ImagePair>& pairs);

// Serves cropped, augmented batches. Items are sampled with replacement from
// uniformly random images and offsets; the stream is deterministic given the
// RNG state.
class BatchIterator {
public:
    BatchIterator(std::vector<ImagePair> corpus, DatasetConfig cfg, std::uint64_t seed);

    Batch next();
    Batch next(Rng& rng) const;  // draws from an external RNG (trainer-owned)
    const std::vector<ImagePair>& corpus() const { return corpus_; }

private:
    std::vector<ImagePair> corpus_;
    DatasetConfig cfg_;
    Rng rng_;
};

// Desk-scale synthetic corpus: checkerboards, oriented gradients and
// band-limited noise at two roughness levels. Writes `count` HR PNGs of
// size x size into dir.
void make_synthetic_corpus(const std::string& dir, int count, int size, std::uint64_t seed);

// Same patterns, generated in memory (used by tests and the acceptance suite).
Tensor synthetic_image(int kind, int size, Rng& rng);

}  // namespace fgsr

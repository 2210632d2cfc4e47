#include "fgsr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "fgsr/image_io.hpp"
#include "fgsr/resample.hpp"

namespace fs = std::filesystem;

namespace fgsr {

void ImagePair::validate() const {
    if (lr.ndim() != 3 || hr.ndim() != 3)
        throw std::invalid_argument("ImagePair: tensors must be {C,H,W}");
    if (lr.dim(0) != hr.dim(0))
        throw std::invalid_argument("ImagePair: channel count mismatch");
    if (hr.dim(1) != scale * lr.dim(1) || hr.dim(2) != scale * lr.dim(2))
        throw std::invalid_argument("ImagePair " + id + ": HR dims are not scale x LR dims");
    if (scale < 1) throw std::invalid_argument("ImagePair: scale must be positive");
}

std::vector<ImagePair> load_corpus(const DatasetConfig& cfg) {
    if (!fs::is_directory(cfg.hr_dir))
        throw std::runtime_error("load_corpus: not a directory: " + cfg.hr_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cfg.hr_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("load_corpus: no PNG images in " + cfg.hr_dir);

    std::vector<ImagePair> corpus;
    corpus.reserve(files.size());
    for (const auto& p : files) {
        ImagePair pair;
        pair.id = p.stem().string();
        pair.scale = cfg.scale;
        pair.hr = center_crop_to_multiple(load_png(p.string()), cfg.scale);
        bool have_lr = false;
        if (cfg.lr_dir) {
            const fs::path lrp =
                fs::path(*cfg.lr_dir) / ("X" + std::to_string(cfg.scale)) / p.filename();
            if (fs::exists(lrp)) {
                pair.lr = load_png(lrp.string());
                have_lr = true;
            }
        }
        if (!have_lr) pair.lr = bicubic_downscale(pair.hr, cfg.scale);
        pair.validate();
        corpus.push_back(std::move(pair));
    }
    return corpus;
}

ImagePair random_patch(const ImagePair& pair, int patch_size_lr, Rng& rng) {
    const int h = pair.lr.dim(1), w = pair.lr.dim(2), c = pair.lr.dim(0);
    if (patch_size_lr > h || patch_size_lr > w)
        throw std::invalid_argument("random_patch: patch larger than image " + pair.id);
    const int i = static_cast<int>(rng.uniform_int(0, h - patch_size_lr));
    const int j = static_cast<int>(rng.uniform_int(0, w - patch_size_lr));
    const int r = pair.scale;
    const int ps = patch_size_lr;

    ImagePair out;
    out.scale = r;
    out.id = pair.id;
    out.lr = Tensor({c, ps, ps});
    out.hr = Tensor({c, ps * r, ps * r});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < ps; ++y)
            for (int x = 0; x < ps; ++x) out.lr.at3(ch, y, x) = pair.lr.at3(ch, i + y, j + x);
        for (int y = 0; y < ps * r; ++y)
            for (int x = 0; x < ps * r; ++x)
                out.hr.at3(ch, y, x) = pair.hr.at3(ch, i * r + y, j * r + x);
    }
    return out;
}

ImagePair apply_dihedral(const ImagePair& pair, int k) {
    ImagePair out;
    out.scale = pair.scale;
    out.id = pair.id;
    out.lr = dihedral_transform(pair.lr, k);
    out.hr = dihedral_transform(pair.hr, k);
    return out;
}

ImagePair augment_pair(const ImagePair& pair, Rng& rng) {
    return apply_dihedral(pair, static_cast<int>(rng.uniform_int(0, 7)));
}

Batch stack_pairs(const std::vector<ImagePair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("stack_pairs: empty list");
    const int n = static_cast<int>(pairs.size());
    const auto& first = pairs.front();
    Batch b;
    b.lr = Tensor({n, first.lr.dim(0), first.lr.dim(1), first.lr.dim(2)});
    b.hr = Tensor({n, first.hr.dim(0), first.hr.dim(1), first.hr.dim(2)});
    const std::int64_t lr_sz = first.lr.numel(), hr_sz = first.hr.numel();
    for (int i = 0; i < n; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        if (p.lr.numel() != lr_sz || p.hr.numel() != hr_sz)
            throw std::invalid_argument("stack_pairs: heterogeneous pair sizes");
        std::copy_n(p.lr.data(), lr_sz, b.lr.data() + i * lr_sz);
        std::copy_n(p.hr.data(), hr_sz, b.hr.data() + i * hr_sz);
    }
    return b;
}

BatchIterator::BatchIterator(std::vector<ImagePair> corpus, DatasetConfig cfg, std::uint64_t seed)
    : corpus_(std::move(corpus)), cfg_(std::move(cfg)), rng_(seed) {
    if (corpus_.empty()) throw std::runtime_error("BatchIterator: empty corpus");
    if (cfg_.batch_size < 1) throw std::invalid_argument("BatchIterator: batch_size must be >= 1");
    for (const auto& p : corpus_)
        if (cfg_.patch_size_lr > p.lr.dim(1) || cfg_.patch_size_lr > p.lr.dim(2))
            throw std::runtime_error("BatchIterator: patch size " +
                                     std::to_string(cfg_.patch_size_lr) +
                                     " exceeds LR dims of image " + p.id);
}

Batch BatchIterator::next() { return next(rng_); }

Batch BatchIterator::next(Rng& rng) const {
    std::vector<ImagePair> items;
    items.reserve(static_cast<std::size_t>(cfg_.batch_size));
    for (int i = 0; i < cfg_.batch_size; ++i) {
        const auto idx = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(corpus_.size()) - 1));
        ImagePair p = random_patch(corpus_[idx], cfg_.patch_size_lr, rng);
        if (cfg_.augment) p = augment_pair(p, rng);
        items.push_back(std::move(p));
    }
    return stack_pairs(items);
}

Tensor synthetic_image(int kind, int size, Rng& rng) {
    Tensor img({3, size, size});
    switch (kind % 4) {
        case 0: {  // checkerboard
            const int cell = static_cast<int>(rng.uniform_int(4, std::max(4, size / 6)));
            double ca[3], cb[3];
            for (int c = 0; c < 3; ++c) {
                ca[c] = rng.uniform();
                cb[c] = rng.uniform();
            }
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        img.at3(c, y, x) = ((y / cell + x / cell) % 2 == 0) ? ca[c] : cb[c];
            break;
        }
        case 1: {  // oriented linear gradient
            const double theta = rng.uniform() * 6.283185307179586;
            const double gx = std::cos(theta), gy = std::sin(theta);
            double base[3];
            for (int c = 0; c < 3; ++c) base[c] = 0.2 + 0.6 * rng.uniform();
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        const double t =
                            0.5 + 0.5 * (gx * (x - size / 2.0) + gy * (y - size / 2.0)) / size;
                        img.at3(c, y, x) = std::clamp(base[c] * t + (1.0 - base[c]) * (1.0 - t) * 0.5,
                                                      0.0, 1.0);
                    }
            break;
        }
        default: {  // band-limited noise; kind 2 smooth, kind 3 rough
            const int radius = (kind % 4 == 2) ? std::max(2, size / 12) : 1;
            Tensor noise({3, size, size});
            for (std::int64_t i = 0; i < noise.numel(); ++i) noise[i] = rng.uniform();
            // separable box blur
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        double acc = 0.0;
                        int cnt = 0;
                        for (int d = -radius; d <= radius; ++d) {
                            const int xx = std::clamp(x + d, 0, size - 1);
                            acc += noise.at3(c, y, xx);
                            ++cnt;
                        }
                        img.at3(c, y, x) = acc / cnt;
                    }
            Tensor tmp = img;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        double acc = 0.0;
                        int cnt = 0;
                        for (int d = -radius; d <= radius; ++d) {
                            const int yy = std::clamp(y + d, 0, size - 1);
                            acc += tmp.at3(c, yy, x);
                            ++cnt;
                        }
                        img.at3(c, y, x) = acc / cnt;
                    }
            break;
        }
    }
    return img;
}

void make_synthetic_corpus(const std::string& dir, int count, int size, std::uint64_t seed) {
    fs::create_directories(dir);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        const Tensor img = synthetic_image(i, size, rng);
        char name[32];
        std::snprintf(name, sizeof(name), "synthetic_%03d.png", i);
        save_png((fs::path(dir) / name).string(), img);
    }
}

}  // namespace fgsr

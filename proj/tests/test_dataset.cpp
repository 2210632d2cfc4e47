#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "fgsr/dataset.hpp"
#include "fgsr/image_io.hpp"
#include "fgsr/resample.hpp"
#include "oracles.hpp"

using namespace fgsr;
namespace fsys = std::filesystem;

namespace {

// HR pixel values encode their absolute position so crop offsets are
// recoverable from the content.
ImagePair coordinate_pair(int lr_h, int lr_w, int scale) {
    ImagePair p;
    p.scale = scale;
    p.id = "coords";
    p.hr = Tensor({1, lr_h * scale, lr_w * scale});
    const double denom = static_cast<double>(lr_h * scale) * (lr_w * scale);
    for (int y = 0; y < lr_h * scale; ++y)
        for (int x = 0; x < lr_w * scale; ++x)
            p.hr.at3(0, y, x) = (y * static_cast<double>(lr_w * scale) + x) / denom;
    p.lr = Tensor({1, lr_h, lr_w});
    for (int y = 0; y < lr_h; ++y)
        for (int x = 0; x < lr_w; ++x)
            p.lr.at3(0, y, x) = (y * static_cast<double>(lr_w) + x) / (lr_h * lr_w);
    return p;
}

}  // namespace

TEST_CASE("ImagePair validation") {
    ImagePair p = coordinate_pair(4, 4, 4);
    CHECK_NOTHROW(p.validate());
    p.hr = Tensor({1, 15, 16});
    CHECK_THROWS(p.validate());
}

TEST_CASE("random_patch: corner alignment and determinism") {
    ImagePair p = coordinate_pair(12, 12, 4);
    {
        Rng a(3), b(3);
        ImagePair pa = random_patch(p, 6, a);
        ImagePair pb = random_patch(p, 6, b);
        CHECK(oracle::max_abs_diff(pa.lr, pb.lr) == 0.0);
        CHECK(oracle::max_abs_diff(pa.hr, pb.hr) == 0.0);
        CHECK(pa.lr.shape() == std::vector<int>{1, 6, 6});
        CHECK(pa.hr.shape() == std::vector<int>{1, 24, 24});
    }
    CHECK_THROWS(([&] { Rng r(1); random_patch(p, 13, r); })());
}

TEST_CASE("random_patch: HR offset is exactly scale x LR offset (100 seeds)") {
    const int lr_h = 10, lr_w = 14, r = 4, ps = 5;
    ImagePair p = coordinate_pair(lr_h, lr_w, r);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        ImagePair c = random_patch(p, ps, rng);
        // recover the LR offset from the first LR pixel value
        const double v = c.lr.at3(0, 0, 0) * (lr_h * lr_w);
        const int i = static_cast<int>(v + 0.5) / lr_w;
        const int j = static_cast<int>(v + 0.5) % lr_w;
        // the first HR pixel must sit at (r*i, r*j)
        const double hv = c.hr.at3(0, 0, 0) * (static_cast<double>(lr_h * r) * (lr_w * r));
        const int hy = static_cast<int>(hv + 0.5) / (lr_w * r);
        const int hx = static_cast<int>(hv + 0.5) % (lr_w * r);
        CHECK(hy == r * i);
        CHECK(hx == r * j);
        CHECK_NOTHROW(c.validate());
    }
}

TEST_CASE("augmentation applies one dihedral transform to both planes") {
    ImagePair p = coordinate_pair(6, 6, 2);
    ImagePair id = apply_dihedral(p, 0);
    CHECK(oracle::max_abs_diff(id.lr, p.lr) == 0.0);

    ImagePair rot = apply_dihedral(p, 1);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            CHECK(rot.lr.at3(0, j, 5 - i) == p.lr.at3(0, i, j));
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j)
            CHECK(rot.hr.at3(0, j, 11 - i) == p.hr.at3(0, i, j));

    for (int k = 0; k < 8; ++k) {
        ImagePair back = apply_dihedral(apply_dihedral(p, k), dihedral_inverse(k));
        CHECK(oracle::max_abs_diff(back.lr, p.lr) == 0.0);
        CHECK(oracle::max_abs_diff(back.hr, p.hr) == 0.0);
    }
}

TEST_CASE("stack_pairs shape law") {
    std::vector<ImagePair> items;
    for (int i = 0; i < 16; ++i) items.push_back(coordinate_pair(8, 8, 4));
    Batch b = stack_pairs(items);
    CHECK(b.lr.shape() == std::vector<int>{16, 1, 8, 8});
    CHECK(b.hr.shape() == std::vector<int>{16, 1, 32, 32});
    CHECK_THROWS(stack_pairs({}));
}

TEST_CASE("batch iterator: with-replacement sampling, determinism, range") {
    Rng gen(7);
    std::vector<ImagePair> corpus;
    for (int i = 0; i < 3; ++i) {
        ImagePair p;
        p.scale = 4;
        p.id = "img" + std::to_string(i);
        p.hr = oracle::rand_tensor({3, 48, 48}, gen);
        p.lr = bicubic_downscale(p.hr, 4);
        corpus.push_back(std::move(p));
    }
    DatasetConfig cfg;
    cfg.scale = 4;
    cfg.patch_size_lr = 8;
    cfg.batch_size = 16;

    BatchIterator it1(corpus, cfg, 123), it2(corpus, cfg, 123);
    for (int i = 0; i < 3; ++i) {
        Batch a = it1.next();
        Batch b = it2.next();
        CHECK(a.lr.shape() == std::vector<int>{16, 3, 8, 8});
        CHECK(a.hr.shape() == std::vector<int>{16, 3, 32, 32});
        CHECK(oracle::max_abs_diff(a.lr, b.lr) == 0.0);
        CHECK(oracle::max_abs_diff(a.hr, b.hr) == 0.0);
        for (std::int64_t k = 0; k < a.hr.numel(); ++k) {
            CHECK(a.hr[k] >= 0.0);
            CHECK(a.hr[k] <= 1.0);
        }
    }
    CHECK_THROWS(BatchIterator({}, cfg, 1));
}

TEST_CASE("synthetic corpus round-trips through the loader") {
    const fsys::path dir = fsys::temp_directory_path() / "fgsr_test_corpus";
    fsys::remove_all(dir);
    make_synthetic_corpus(dir.string(), 4, 40, 11);
    int count = 0;
    for (const auto& e : fsys::directory_iterator(dir))
        if (e.path().extension() == ".png") ++count;
    CHECK(count == 4);

    DatasetConfig cfg;
    cfg.hr_dir = dir.string();
    cfg.scale = 4;
    auto corpus = load_corpus(cfg);
    REQUIRE(corpus.size() == 4);
    for (const auto& p : corpus) {
        CHECK_NOTHROW(p.validate());
        // LR was synthesized by the same degradation used everywhere
        CHECK(oracle::max_abs_diff(p.lr, bicubic_downscale(p.hr, 4)) == 0.0);
    }

    // pre-generated LR takes precedence over on-the-fly degradation
    const fsys::path lr_dir = dir / "lr";
    fsys::create_directories(lr_dir / "X4");
    Tensor custom = Tensor::full({3, 10, 10}, 0.25);
    save_png((lr_dir / "X4" / "synthetic_000.png").string(), custom);
    cfg.lr_dir = lr_dir.string();
    auto corpus2 = load_corpus(cfg);
    CHECK(oracle::max_abs_diff(corpus2[0].lr, custom) < 1e-2);  // 8-bit quantization
    fsys::remove_all(dir);
}

TEST_CASE("load_corpus rejects an empty directory") {
    const fsys::path dir = fsys::temp_directory_path() / "fgsr_empty_corpus";
    fsys::create_directories(dir);
    DatasetConfig cfg;
    cfg.hr_dir = dir.string();
    CHECK_THROWS(load_corpus(cfg));
    fsys::remove_all(dir);
}

TEST_CASE("png io rejects non-png input") {
    const fsys::path p = fsys::temp_directory_path() / "fgsr_not_a_png.png";
    {
        std::FILE* f = std::fopen(p.string().c_str(), "wb");
        std::fputs("definitely a jpeg", f);
        std::fclose(f);
    }
    CHECK(!is_png_file(p.string()));
    CHECK_THROWS(load_png(p.string()));
    fsys::remove(p);
}

#include "fgsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fgsr/image_io.hpp"

namespace fs = std::filesystem;

namespace fgsr {

namespace {

Tensor border_cropped(const Tensor& img, int crop) {
    if (crop <= 0) return img;
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (2 * crop >= h || 2 * crop >= w)
        throw std::invalid_argument("border crop larger than image");
    Tensor out({c, h - 2 * crop, w - 2 * crop});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h - 2 * crop; ++y)
            for (int x = 0; x < w - 2 * crop; ++x)
                out.at3(ch, y, x) = img.at3(ch, y + crop, x + crop);
    return out;
}

double mse_between(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
    if (a.ndim() != 3 || !a.shape().size() || a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a.shape()) + " vs " +
                                    Tensor::shape_str(b.shape()));
}

std::optional<double> run_external_scorer(const std::string& cmd, const std::string& path) {
    const std::string full = cmd + " '" + path + "'";
    std::FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) return std::nullopt;
    char buf[256];
    std::string out;
    while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
    const int rc = pclose(pipe);
    if (rc != 0) return std::nullopt;
    try {
        return std::stod(out);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

Tensor rgb_to_y(const Tensor& img) {
    if (img.ndim() != 3) throw std::invalid_argument("rgb_to_y: expected {C,H,W}");
    if (img.dim(0) == 1) return img;
    if (img.dim(0) != 3) throw std::invalid_argument("rgb_to_y: expected 1 or 3 channels");
    const int h = img.dim(1), w = img.dim(2);
    Tensor y({1, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            y.at3(0, i, j) = (65.481 * img.at3(0, i, j) + 128.553 * img.at3(1, i, j) +
                              24.966 * img.at3(2, i, j) + 16.0) /
                             255.0;
    return y;
}

double psnr(const Tensor& a, const Tensor& b, bool on_y, int border_crop) {
    check_pair(a, b, "psnr");
    const Tensor pa = border_cropped(on_y ? rgb_to_y(a) : a, border_crop);
    const Tensor pb = border_cropped(on_y ? rgb_to_y(b) : b, border_crop);
    const double mse = mse_between(pa, pb);
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double rmse(const Tensor& a, const Tensor& b, bool on_y, int border_crop) {
    check_pair(a, b, "rmse");
    const Tensor pa = border_cropped(on_y ? rgb_to_y(a) : a, border_crop);
    const Tensor pb = border_cropped(on_y ? rgb_to_y(b) : b, border_crop);
    return std::sqrt(mse_between(pa, pb));
}

double ssim(const Tensor& a, const Tensor& b) {
    check_pair(a, b, "ssim");
    const Tensor ya = rgb_to_y(a);
    const Tensor yb = rgb_to_y(b);
    const int h = ya.dim(1), w = ya.dim(2);
    constexpr int win = 11;
    if (h < win || w < win)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    double g[win];
    double gsum = 0.0;
    for (int i = 0; i < win; ++i) {
        const double d = i - (win - 1) / 2.0;
        g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        gsum += g[i];
    }
    for (int i = 0; i < win; ++i) g[i] /= gsum;

    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    double acc = 0.0;
    std::int64_t count = 0;
    for (int y0 = 0; y0 + win <= h; ++y0)
        for (int x0 = 0; x0 + win <= w; ++x0) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double wgt = g[i] * g[j];
                    mu_a += wgt * ya.at3(0, y0 + i, x0 + j);
                    mu_b += wgt * yb.at3(0, y0 + i, x0 + j);
                }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double wgt = g[i] * g[j];
                    const double da = ya.at3(0, y0 + i, x0 + j) - mu_a;
                    const double db = yb.at3(0, y0 + i, x0 + j) - mu_b;
                    var_a += wgt * da * da;
                    var_b += wgt * db * db;
                    cov += wgt * da * db;
                }
            acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++count;
        }
    return acc / static_cast<double>(count);
}

EvalReport evaluate_dir(const std::string& sr_dir, const std::string& hr_dir,
                        const EvalOptions& options) {
    auto list_pngs = [](const std::string& dir) {
        if (!fs::is_directory(dir))
            throw std::runtime_error("evaluate_dir: not a directory: " + dir);
        std::map<std::string, fs::path> out;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".png")
                out.emplace(e.path().stem().string(), e.path());
        return out;
    };
    const auto sr_files = list_pngs(sr_dir);
    const auto hr_files = list_pngs(hr_dir);

    EvalReport report;
    report.options = options;
    for (const auto& [stem, p] : sr_files)
        if (!hr_files.count(stem)) report.omissions.push_back(stem + " (no HR counterpart)");
    for (const auto& [stem, p] : hr_files)
        if (!sr_files.count(stem)) report.omissions.push_back(stem + " (no SR counterpart)");
    std::sort(report.omissions.begin(), report.omissions.end());

    double sp = 0.0, sr_ = 0.0, ss = 0.0, sper = 0.0;
    int nper = 0;
    for (const auto& [stem, path] : sr_files) {
        auto it = hr_files.find(stem);
        if (it == hr_files.end()) continue;
        const Tensor sr_img = load_png(path.string());
        const Tensor hr_img = load_png(it->second.string());
        EvalRecord rec;
        rec.id = stem;
        rec.psnr_y = psnr(sr_img, hr_img, true, options.border_crop);
        rec.rmse = rmse(sr_img, hr_img, !options.rmse_on_rgb, options.border_crop);
        rec.ssim = ssim(sr_img, hr_img);
        if (!options.external_scorer.empty())
            rec.perceptual = run_external_scorer(options.external_scorer, path.string());
        sp += rec.psnr_y;
        sr_ += rec.rmse;
        ss += rec.ssim;
        if (rec.perceptual) {
            sper += *rec.perceptual;
            ++nper;
        }
        report.records.push_back(std::move(rec));
    }
    if (report.records.empty())
        throw std::runtime_error("evaluate_dir: no matching stems between " + sr_dir + " and " +
                                 hr_dir);
    const double n = static_cast<double>(report.records.size());
    report.mean_psnr = sp / n;
    report.mean_rmse = sr_ / n;
    report.mean_ssim = ss / n;
    if (nper > 0) report.mean_perceptual = sper / nper;
    return report;
}

std::string report_table(const EvalReport& report) {
    std::ostringstream os;
    os << "id                         psnr_y     rmse     ssim  perceptual\n";
    char line[160];
    for (const auto& r : report.records) {
        if (r.perceptual)
            std::snprintf(line, sizeof(line), "%-24s %8.3f %8.5f %8.5f %10.4f\n", r.id.c_str(),
                          r.psnr_y, r.rmse, r.ssim, *r.perceptual);
        else
            std::snprintf(line, sizeof(line), "%-24s %8.3f %8.5f %8.5f %10s\n", r.id.c_str(),
                          r.psnr_y, r.rmse, r.ssim, "-");
        os << line;
    }
    std::snprintf(line, sizeof(line), "%-24s %8.3f %8.5f %8.5f\n", "mean", report.mean_psnr,
                  report.mean_rmse, report.mean_ssim);
    os << line;
    for (const auto& o : report.omissions) os << "omitted: " << o << "\n";
    return os.str();
}

nlohmann::json report_json(const EvalReport& report) {
    nlohmann::json j;
    j["config"] = {{"border_crop", report.options.border_crop},
                   {"rmse_on_rgb", report.options.rmse_on_rgb},
                   {"scale", report.options.scale}};
    j["records"] = nlohmann::json::array();
    for (const auto& r : report.records) {
        nlohmann::json rec = {
            {"id", r.id}, {"psnr_y", r.psnr_y}, {"rmse", r.rmse}, {"ssim", r.ssim}};
        if (r.perceptual) rec["perceptual"] = *r.perceptual;
        j["records"].push_back(rec);
    }
    j["aggregates"] = {{"psnr_y", report.mean_psnr},
                       {"rmse", report.mean_rmse},
                       {"ssim", report.mean_ssim}};
    if (report.mean_perceptual) j["aggregates"]["perceptual"] = *report.mean_perceptual;
    j["omissions"] = report.omissions;
    return j;
}

}  // namespace fgsr

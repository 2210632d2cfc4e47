#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgsr/tensor.hpp"

namespace fgsr {

// Caps the PSNR of identical images instead of reporting +inf.
inline constexpr double kPsnrCap = 100.0;

// ITU-R BT.601 studio-swing luma on the [0,1] scale:
// Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255. Grayscale passes through.
Tensor rgb_to_y(const Tensor& img);

double psnr(const Tensor& a, const Tensor& b, bool on_y = true, int border_crop = 0);
double rmse(const Tensor& a, const Tensor& b, bool on_y = true, int border_crop = 0);

// Single-scale SSIM on the luma plane: 11x11 Gaussian (sigma 1.5),
// K1 = 0.01, K2 = 0.03, valid windows only.
double ssim(const Tensor& a, const Tensor& b);

struct EvalOptions {
    int border_crop = 0;
    bool rmse_on_rgb = false;
    // Optional external no-reference scorer: invoked as `<cmd> <image path>`,
    // must print one scalar. Fills the report's perceptual column.
    std::string external_scorer;
    int scale = 4;  // echoed into the report
};

struct EvalRecord {
    std::string id;
    double psnr_y = 0.0;
    double rmse = 0.0;
    double ssim = 0.0;
    std::optional<double> perceptual;
};

struct EvalReport {
    std::vector<EvalRecord> records;            // sorted by id
    std::vector<std::string> omissions;         // stems missing a counterpart
    double mean_psnr = 0.0, mean_rmse = 0.0, mean_ssim = 0.0;
    std::optional<double> mean_perceptual;
    EvalOptions options;
};

EvalReport evaluate_dir(const std::string& sr_dir, const std::string& hr_dir,
                        const EvalOptions& options = {});

std::string report_table(const EvalReport& report);
nlohmann::json report_json(const EvalReport& report);

}  // namespace fgsr

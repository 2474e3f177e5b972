// SPDX-License-Identifier: Apache-2.0
#include "unetgan/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace unetgan {

namespace {

cv::Mat to_mat(const torch::Tensor& hwc) {
    const auto t = hwc.contiguous();
    return cv::Mat(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC(static_cast<int>(t.size(2))),
                   t.data_ptr<uint8_t>())
        .clone();
}

torch::Tensor from_mat(const cv::Mat& mat) {
    cv::Mat c = mat.isContinuous() ? mat : mat.clone();
    return torch::from_blob(c.data, {c.rows, c.cols, c.channels()}, torch::kUInt8).clone();
}

void write_mat_rgb(const cv::Mat& rgb, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    cv::Mat bgr;
    if (rgb.channels() == 3) cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    else bgr = rgb;
    if (!cv::imwrite(path.string(), bgr)) throw std::runtime_error("cannot write image " + path.string());
}

torch::Tensor enlarge(const torch::Tensor& hwc, int64_t scale) {
    if (scale == 1) return hwc;
    return hwc.repeat_interleave(scale, 0).repeat_interleave(scale, 1);
}

// Eval mode for the lifetime of the guard.
class EvalMode {
public:
    explicit EvalMode(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) { module_.eval(); }
    ~EvalMode() { module_.train(was_training_); }
    EvalMode(const EvalMode&) = delete;
    EvalMode& operator=(const EvalMode&) = delete;

private:
    torch::nn::Module& module_;
    bool was_training_;
};

cv::Scalar colour(int r, int g, int b) { return {static_cast<double>(r), static_cast<double>(g), static_cast<double>(b)}; }

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace

void write_png(const torch::Tensor& hwc_uint8, const fs::path& path) {
    TORCH_CHECK(hwc_uint8.dim() == 3 && hwc_uint8.scalar_type() == torch::kUInt8, "write_png: expected HWC uint8");
    write_mat_rgb(to_mat(hwc_uint8), path);
}

torch::Tensor read_png(const fs::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw std::runtime_error("cannot read image " + path.string());
    if (mat.channels() == 3) cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
    return from_mat(mat);
}

torch::Tensor to_rgb_uint8(const torch::Tensor& chw) {
    auto t = chw.detach().to(torch::kFloat64).add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8);
    if (t.size(0) == 1) t = t.expand({3, t.size(1), t.size(2)});
    return t.permute({1, 2, 0}).contiguous();
}

torch::Tensor probability_to_gray(const torch::Tensor& hw) {
    const auto g = hw.detach().to(torch::kFloat64).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
    return g.unsqueeze(2).expand({g.size(0), g.size(1), 3}).contiguous();
}

HeatmapGrid render_decoder_heatmaps(GeneratorImpl& generator, UNetDiscriminatorImpl& discriminator,
                                    const LatentBatch& latents, const fs::path& path, int64_t scale) {
    if (scale < 1) throw std::invalid_argument("render_decoder_heatmaps: scale must be >= 1");
    HeatmapGrid grid;
    grid.samples = generate_frozen(generator, latents);
    {
        torch::NoGradGuard no_grad;
        EvalMode eval(discriminator);
        grid.probability_maps = decoder_probability_map(discriminator.forward(grid.samples, latents.y));
    }
    std::vector<torch::Tensor> top, bottom;
    for (int64_t i = 0; i < grid.samples.size(0); ++i) {
        top.push_back(enlarge(to_rgb_uint8(grid.samples[i]), scale));
        bottom.push_back(enlarge(probability_to_gray(grid.probability_maps[i][0]), scale));
    }
    grid.image = torch::cat({torch::cat(top, 1), torch::cat(bottom, 1)}, 0).contiguous();
    write_png(grid.image, path);
    return grid;
}

std::vector<ScatterPoint> render_enc_dec_scatter(UNetDiscriminatorImpl& discriminator, const torch::Tensor& images,
                                                 const std::optional<torch::Tensor>& labels, const fs::path& path,
                                                 int size) {
    torch::Tensor enc, dec;
    {
        torch::NoGradGuard no_grad;
        EvalMode eval(discriminator);
        const auto score = discriminator.forward(images, labels);
        enc = torch::sigmoid(score.enc_logit).to(torch::kFloat64);
        dec = mean_pixel_score(score).to(torch::kFloat64);
    }

    const int margin = 48;
    const int span = size - 2 * margin;
    cv::Mat canvas(size, size, CV_8UC3, colour(255, 255, 255));
    const auto to_px = [&](double u, double v) {
        return cv::Point(margin + static_cast<int>(std::lround(u * span)), size - margin - static_cast<int>(std::lround(v * span)));
    };
    cv::rectangle(canvas, to_px(0, 0), to_px(1, 1), colour(0, 0, 0), 1);
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        cv::line(canvas, to_px(t, 0), to_px(t, 0) + cv::Point(0, 5), colour(0, 0, 0));
        cv::line(canvas, to_px(0, t), to_px(0, t) - cv::Point(5, 0), colour(0, 0, 0));
        cv::putText(canvas, fixed(t, 2), to_px(t, 0) + cv::Point(-14, 20), cv::FONT_HERSHEY_SIMPLEX, 0.4, colour(0, 0, 0));
        cv::putText(canvas, fixed(t, 2), to_px(0, t) + cv::Point(-44, 4), cv::FONT_HERSHEY_SIMPLEX, 0.4, colour(0, 0, 0));
    }
    cv::putText(canvas, "encoder score", cv::Point(size / 2 - 50, size - 10), cv::FONT_HERSHEY_SIMPLEX, 0.5, colour(0, 0, 0));
    cv::putText(canvas, "mean decoder score", cv::Point(6, 20), cv::FONT_HERSHEY_SIMPLEX, 0.5, colour(0, 0, 0));

    std::vector<ScatterPoint> points;
    for (int64_t i = 0; i < enc.size(0); ++i) {
        ScatterPoint p;
        p.encoder_score = enc[i].item<double>();
        p.decoder_score = dec[i].item<double>();
        const auto c = to_px(p.encoder_score, p.decoder_score);
        p.x = c.x;
        p.y = c.y;
        cv::circle(canvas, c, 4, colour(30, 90, 200), cv::FILLED, cv::LINE_AA);
        points.push_back(p);
    }
    write_mat_rgb(canvas, path);
    return points;
}

CutMixPanel render_cutmix_panel(UNetDiscriminatorImpl& discriminator, const torch::Tensor& real, const torch::Tensor& fake,
                                const std::vector<CutMixMask>& masks, const std::optional<torch::Tensor>& labels,
                                const fs::path& path, int64_t scale) {
    CutMixPanel panel;
    panel.mixed = mix(real, fake, masks);
    {
        torch::NoGradGuard no_grad;
        EvalMode eval(discriminator);
        const auto score = discriminator.forward(panel.mixed, labels);
        panel.decoder_maps = decoder_probability_map(score);
        panel.encoder_scores = torch::sigmoid(score.enc_logit);
    }

    const int64_t n = real.size(0);
    std::vector<torch::Tensor> rows;
    const auto row = [&](const std::function<torch::Tensor(int64_t)>& tile) {
        std::vector<torch::Tensor> tiles;
        for (int64_t i = 0; i < n; ++i) tiles.push_back(enlarge(tile(i), scale));
        rows.push_back(torch::cat(tiles, 1));
    };
    row([&](int64_t i) { return to_rgb_uint8(real[i]); });
    row([&](int64_t i) { return to_rgb_uint8(fake[i]); });
    row([&](int64_t i) { return probability_to_gray(masks[static_cast<size_t>(i)].mask); });
    row([&](int64_t i) { return to_rgb_uint8(panel.mixed[i]); });
    row([&](int64_t i) { return probability_to_gray(panel.decoder_maps[i][0]); });
    const auto tiles = torch::cat(rows, 0).contiguous();

    const int tile_w = static_cast<int>(real.size(3) * scale);
    const int band = 40;
    cv::Mat canvas(static_cast<int>(tiles.size(0)) + band, static_cast<int>(tiles.size(1)), CV_8UC3, colour(255, 255, 255));
    to_mat(tiles).copyTo(canvas(cv::Rect(0, 0, static_cast<int>(tiles.size(1)), static_cast<int>(tiles.size(0)))));
    const double font = std::clamp(tile_w / 160.0, 0.3, 0.6);
    for (int64_t i = 0; i < n; ++i) {
        const int x = static_cast<int>(i) * tile_w + 3;
        const int y = static_cast<int>(tiles.size(0));
        cv::putText(canvas, "r=" + fixed(masks[static_cast<size_t>(i)].real_ratio, 2), cv::Point(x, y + 16),
                    cv::FONT_HERSHEY_SIMPLEX, font, colour(0, 0, 0));
        cv::putText(canvas, "D=" + fixed(panel.encoder_scores[i].item<double>(), 2), cv::Point(x, y + 34),
                    cv::FONT_HERSHEY_SIMPLEX, font, colour(0, 0, 0));
    }
    write_mat_rgb(canvas, path);
    panel.image = from_mat(canvas);
    return panel;
}

CurvePlot render_metric_curve(const std::vector<MetricsRecord>& records, const std::string& metric, const fs::path& path,
                              int width, int height) {
    CurvePlot plot;
    for (const auto& r : records) {
        std::optional<double> v;
        if (metric == "fid") v = r.fid;
        else if (metric == "is") v = r.is;
        else if (auto it = r.losses.find(metric); it != r.losses.end()) v = it->second;
        if (v && std::isfinite(*v)) {
            plot.iterations.push_back(r.iteration);
            plot.values.push_back(*v);
        }
    }

    const int left = 70, right = 20, top = 30, bottom = 45;
    cv::Mat canvas(height, width, CV_8UC3, colour(255, 255, 255));
    const cv::Point origin(left, height - bottom);
    cv::rectangle(canvas, cv::Point(left, top), origin + cv::Point(width - left - right, 0), colour(0, 0, 0), 1);
    cv::putText(canvas, metric + " vs iteration", cv::Point(left, 20), cv::FONT_HERSHEY_SIMPLEX, 0.5, colour(0, 0, 0));

    if (!plot.values.empty()) {
        const double x0 = static_cast<double>(plot.iterations.front());
        const double x1 = std::max(x0 + 1.0, static_cast<double>(plot.iterations.back()));
        double y0 = *std::min_element(plot.values.begin(), plot.values.end());
        double y1 = *std::max_element(plot.values.begin(), plot.values.end());
        if (y1 - y0 < 1e-12) {
            y0 -= 0.5;
            y1 += 0.5;
        }
        const auto to_px = [&](double x, double y) {
            const double u = (x - x0) / (x1 - x0), v = (y - y0) / (y1 - y0);
            return cv::Point(left + static_cast<int>(std::lround(u * (width - left - right))),
                             height - bottom - static_cast<int>(std::lround(v * (height - top - bottom))));
        };
        for (size_t i = 0; i < plot.values.size(); ++i) {
            const auto p = to_px(static_cast<double>(plot.iterations[i]), plot.values[i]);
            if (i > 0)
                cv::line(canvas, to_px(static_cast<double>(plot.iterations[i - 1]), plot.values[i - 1]), p,
                         colour(200, 40, 40), 2, cv::LINE_AA);
            if (plot.values.size() <= 64) cv::circle(canvas, p, 3, colour(200, 40, 40), cv::FILLED, cv::LINE_AA);
        }
        cv::putText(canvas, std::to_string(plot.iterations.front()), origin + cv::Point(-5, 18), cv::FONT_HERSHEY_SIMPLEX,
                    0.4, colour(0, 0, 0));
        cv::putText(canvas, std::to_string(plot.iterations.back()), cv::Point(width - right - 40, height - bottom + 18),
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, colour(0, 0, 0));
        cv::putText(canvas, fixed(y1, 3), cv::Point(4, top + 5), cv::FONT_HERSHEY_SIMPLEX, 0.4, colour(0, 0, 0));
        cv::putText(canvas, fixed(y0, 3), cv::Point(4, height - bottom), cv::FONT_HERSHEY_SIMPLEX, 0.4, colour(0, 0, 0));
    }
    cv::putText(canvas, "iteration", cv::Point(width / 2 - 30, height - 10), cv::FONT_HERSHEY_SIMPLEX, 0.5, colour(0, 0, 0));
    write_mat_rgb(canvas, path);
    return plot;
}

}  // namespace unetgan

// SPDX-License-Identifier: Apache-2.0
#include "unetgan/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <openssl/evp.h>

#include "unetgan/rng.hpp"

namespace fs = std::filesystem;

namespace unetgan {

namespace {

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

torch::Tensor mat_to_hwc(const cv::Mat& mat) {
    cv::Mat contiguous = mat.isContinuous() ? mat : mat.clone();
    return torch::from_blob(contiguous.data, {contiguous.rows, contiguous.cols, contiguous.channels()}, torch::kUInt8).clone();
}

std::optional<torch::Tensor> read_image(const fs::path& path, int64_t channels) {
    cv::Mat mat = cv::imread(path.string(), channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
    if (mat.empty()) return std::nullopt;
    if (channels == 3) cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
    return mat_to_hwc(mat);
}

}  // namespace

torch::Tensor preprocess_image(const torch::Tensor& hwc_uint8, int64_t image_size) {
    TORCH_CHECK(hwc_uint8.dim() == 3 && hwc_uint8.scalar_type() == torch::kUInt8, "preprocess_image: expected HWC uint8");
    const auto h = hwc_uint8.size(0), w = hwc_uint8.size(1), c = hwc_uint8.size(2);
    const auto side = std::min(h, w);
    const auto top = (h - side) / 2, left = (w - side) / 2;
    auto src = hwc_uint8.contiguous();
    cv::Mat full(static_cast<int>(h), static_cast<int>(w), CV_8UC(static_cast<int>(c)), src.data_ptr<uint8_t>());
    cv::Mat cropped = full(cv::Rect(static_cast<int>(left), static_cast<int>(top), static_cast<int>(side), static_cast<int>(side)));
    cv::Mat resized;
    cv::resize(cropped, resized, cv::Size(static_cast<int>(image_size), static_cast<int>(image_size)), 0, 0,
               side >= image_size ? cv::INTER_AREA : cv::INTER_LINEAR);
    return mat_to_hwc(resized).permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

Dataset load_image_folder(const fs::path& root, int64_t image_size, bool conditional, int64_t channels) {
    if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());

    std::vector<std::pair<fs::path, int64_t>> files;
    Dataset ds;
    ds.image_size = image_size;
    if (conditional) {
        std::vector<fs::path> classes;
        for (const auto& entry : fs::directory_iterator(root))
            if (entry.is_directory()) classes.push_back(entry.path());
        std::sort(classes.begin(), classes.end());
        if (classes.empty()) throw DataError("conditional dataset has no class subdirectories: " + root.string());
        for (size_t k = 0; k < classes.size(); ++k) {
            const auto images = sorted_images(classes[k]);
            if (images.empty()) throw DataError("empty class directory: " + classes[k].string());
            for (const auto& p : images) files.emplace_back(p, static_cast<int64_t>(k));
        }
        ds.num_classes = static_cast<int64_t>(classes.size());
    } else {
        for (const auto& p : sorted_images(root)) files.emplace_back(p, 0);
    }

    std::vector<torch::Tensor> images;
    std::vector<int64_t> labels;
    ds.class_counts.assign(static_cast<size_t>(std::max<int64_t>(ds.num_classes, 1)), 0);
    for (const auto& [path, label] : files) {
        auto raw = read_image(path, channels);
        if (!raw) {
            std::cerr << "warning: skipping unreadable image " << path << "\n";
            ++ds.skipped;
            continue;
        }
        images.push_back(preprocess_image(*raw, image_size));
        labels.push_back(label);
        ds.paths.push_back(fs::relative(path, root).string());
        ++ds.class_counts[static_cast<size_t>(label)];
    }
    if (images.empty()) throw DataError("no readable images under " + root.string());
    if (conditional) {
        for (size_t k = 0; k < ds.class_counts.size(); ++k)
            if (ds.class_counts[k] == 0) throw DataError("class " + std::to_string(k) + " has no readable images");
        ds.labels = torch::tensor(labels, torch::kInt64);
    } else {
        ds.class_counts = {static_cast<int64_t>(images.size())};
    }
    ds.images = torch::stack(images);
    return ds;
}

namespace {

constexpr int kSupersample = 4;

cv::Scalar random_colour(Rng& rng, double lo, double hi) {
    return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

void draw_shape(cv::Mat& canvas, int64_t type, cv::Point2d centre, double radius, double angle, const cv::Scalar& colour) {
    const auto pt = [&](double a, double r) {
        return cv::Point(static_cast<int>(std::lround(centre.x + r * std::cos(a + angle))),
                         static_cast<int>(std::lround(centre.y + r * std::sin(a + angle))));
    };
    const auto polygon = [&](int sides, double inner) {
        std::vector<cv::Point> pts;
        const int count = inner > 0.0 ? 2 * sides : sides;
        for (int i = 0; i < count; ++i) {
            const double r = (inner > 0.0 && i % 2 == 1) ? radius * inner : radius;
            pts.push_back(pt(2.0 * M_PI * i / count, r));
        }
        cv::fillConvexPoly(canvas, pts, colour, cv::LINE_AA);
        if (inner > 0.0) cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{pts}, colour, cv::LINE_AA);
    };
    const cv::Point c(static_cast<int>(std::lround(centre.x)), static_cast<int>(std::lround(centre.y)));
    const int r = static_cast<int>(std::lround(radius));
    switch (type) {
        case 0: cv::circle(canvas, c, r, colour, cv::FILLED, cv::LINE_AA); break;
        case 1: polygon(4, 0.0); break;                       // square
        case 2: polygon(3, 0.0); break;                       // triangle
        case 3: cv::ellipse(canvas, c, cv::Size(r, r / 2), angle * 180.0 / M_PI, 0, 360, colour, cv::FILLED, cv::LINE_AA); break;
        case 4: cv::circle(canvas, c, r, colour, std::max(1, r / 3), cv::LINE_AA); break;  // ring
        case 5: polygon(6, 0.0); break;                       // hexagon
        case 6: polygon(5, 0.45); break;                      // star
        case 7: cv::rectangle(canvas, cv::Rect(c.x - r, c.y - r / 4, 2 * r, r / 2), colour, cv::FILLED, cv::LINE_AA); break;
        case 8:  // cross
            cv::rectangle(canvas, cv::Rect(c.x - r, c.y - r / 4, 2 * r, r / 2), colour, cv::FILLED, cv::LINE_AA);
            cv::rectangle(canvas, cv::Rect(c.x - r / 4, c.y - r, r / 2, 2 * r), colour, cv::FILLED, cv::LINE_AA);
            break;
        default: polygon(4, 0.55); break;                     // four-point star
    }
}

}  // namespace

Dataset synth_shapes_dataset(int64_t n, int64_t image_size, int64_t num_classes, uint64_t seed) {
    if (n < 1) throw DataError("synth_shapes_dataset: n must be >= 1");
    if (num_classes == 1 || num_classes < 0 || num_classes > 10)
        throw DataError("synth_shapes_dataset: num_classes must be 0 or in 2..10");

    Dataset ds;
    ds.image_size = image_size;
    ds.num_classes = num_classes;
    const int big = static_cast<int>(image_size) * kSupersample;
    std::vector<torch::Tensor> images;
    std::vector<int64_t> labels;
    images.reserve(static_cast<size_t>(n));
    Rng root(seed);
    for (int64_t i = 0; i < n; ++i) {
        Rng rng = Rng(seed).split(static_cast<uint64_t>(i));
        const int64_t label = num_classes > 0 ? i % num_classes : 0;
        const int64_t type = num_classes > 0 ? label : rng.uniform_int(0, 2);

        cv::Mat canvas(big, big, CV_8UC3, random_colour(rng, 0.0, 90.0));
        const double radius = rng.uniform(0.22, 0.38) * big;
        const cv::Point2d centre(rng.uniform(radius, big - radius), rng.uniform(radius, big - radius));
        draw_shape(canvas, type, centre, radius, rng.uniform(0.0, 2.0 * M_PI), random_colour(rng, 130.0, 255.0));

        cv::Mat small;
        cv::resize(canvas, small, cv::Size(static_cast<int>(image_size), static_cast<int>(image_size)), 0, 0, cv::INTER_AREA);
        images.push_back(mat_to_hwc(small).permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous());
        labels.push_back(label);
    }
    ds.images = torch::stack(images);
    if (num_classes > 0) {
        ds.labels = torch::tensor(labels, torch::kInt64);
        ds.class_counts.assign(static_cast<size_t>(num_classes), 0);
        for (auto y : labels) ++ds.class_counts[static_cast<size_t>(y)];
    } else {
        ds.class_counts = {n};
    }
    return ds;
}

void write_image_folder(const Dataset& dataset, const fs::path& root) {
    fs::create_directories(root);
    std::ofstream manifest(root / "manifest.tsv");
    manifest << "path\tlabel\tsha256\n";
    const auto width = std::to_string(dataset.size()).size();
    for (int64_t i = 0; i < dataset.size(); ++i) {
        const int64_t label = dataset.labels ? (*dataset.labels)[i].item<int64_t>() : -1;
        fs::path rel = dataset.conditional() ? fs::path("class_" + std::to_string(label)) : fs::path();
        std::string name = std::to_string(i);
        name.insert(0, width - name.size(), '0');
        rel /= name + ".png";
        fs::create_directories((root / rel).parent_path());

        auto hwc = dataset.images[i].add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8).permute({1, 2, 0}).contiguous();
        cv::Mat mat(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC(static_cast<int>(hwc.size(2))),
                    hwc.data_ptr<uint8_t>());
        cv::Mat bgr;
        if (mat.channels() == 3) cv::cvtColor(mat, bgr, cv::COLOR_RGB2BGR);
        else bgr = mat;
        std::vector<uint8_t> encoded;
        cv::imencode(".png", bgr, encoded);
        std::ofstream(root / rel, std::ios::binary).write(reinterpret_cast<const char*>(encoded.data()),
                                                          static_cast<std::streamsize>(encoded.size()));
        manifest << rel.string() << "\t" << label << "\t" << sha256_hex(encoded.data(), encoded.size()) << "\n";
    }
}

std::vector<std::vector<int64_t>> epoch_batches(int64_t dataset_size, int64_t batch_size, uint64_t seed, int64_t epoch) {
    if (batch_size < 1 || batch_size > dataset_size)
        throw DataError("batch_size " + std::to_string(batch_size) + " too large for dataset of " + std::to_string(dataset_size));
    std::vector<int64_t> order(static_cast<size_t>(dataset_size));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).split(static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng.engine());

    std::vector<std::vector<int64_t>> out;
    for (int64_t b = 0; b + batch_size <= dataset_size; b += batch_size)
        out.emplace_back(order.begin() + b, order.begin() + b + batch_size);
    return out;
}

Batch gather(const Dataset& dataset, const std::vector<int64_t>& indices) {
    Batch batch;
    batch.indices = indices;
    const auto idx = torch::tensor(indices, torch::kInt64);
    batch.images = dataset.images.index_select(0, idx);
    if (dataset.labels) {
        batch.labels = dataset.labels->index_select(0, idx);
        batch.class_groups.assign(static_cast<size_t>(dataset.num_classes), {});
        const auto acc = batch.labels->accessor<int64_t, 1>();
        for (int64_t i = 0; i < acc.size(0); ++i) batch.class_groups[static_cast<size_t>(acc[i])].push_back(i);
    }
    return batch;
}

std::vector<Batch> batches(const Dataset& dataset, int64_t batch_size, uint64_t seed, int64_t epoch) {
    std::vector<Batch> out;
    for (const auto& idx : epoch_batches(dataset.size(), batch_size, seed, epoch)) out.push_back(gather(dataset, idx));
    return out;
}

Batch batch_at(const Dataset& dataset, int64_t batch_size, uint64_t seed, int64_t iteration) {
    const int64_t per_epoch = dataset.size() / batch_size;
    if (per_epoch == 0) throw DataError("batch_size too large for dataset");
    const auto order = epoch_batches(dataset.size(), batch_size, seed, iteration / per_epoch);
    return gather(dataset, order[static_cast<size_t>(iteration % per_epoch)]);
}

std::string sha256_hex(const void* data, size_t size) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_Digest(data, size, digest.data(), &len, EVP_sha256(), nullptr);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string tensor_digest(const torch::Tensor& t) {
    const auto c = t.detach().cpu().contiguous();
    return sha256_hex(c.data_ptr(), static_cast<size_t>(c.numel()) * c.element_size());
}

}  // namespace unetgan

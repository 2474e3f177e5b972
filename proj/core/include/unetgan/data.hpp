// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_DATA_HPP
#define UNETGAN_DATA_HPP

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace unetgan {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// In-memory image dataset, values in [-1, 1].
struct Dataset {
    torch::Tensor images;                 // (N, C, S, S) float32
    std::optional<torch::Tensor> labels;  // (N) int64 when conditional
    int64_t image_size = 0;
    int64_t num_classes = 0;
    std::vector<int64_t> class_counts;
    std::vector<std::string> paths;       // source files, empty for synthetic data
    int64_t skipped = 0;                  // unreadable files ignored during loading

    int64_t size() const { return images.defined() ? images.size(0) : 0; }
    bool conditional() const { return num_classes > 0; }
};

/// Loads every decodable image below `root` (sorted paths). Conditional
/// layout is one subdirectory per class, labels assigned in sorted
/// subdirectory order. Images are centre-cropped to a square, area-resized
/// to image_size and scaled to [-1, 1].
Dataset load_image_folder(const std::filesystem::path& root, int64_t image_size, bool conditional, int64_t channels = 3);

/// Centre crop + area resize of one decoded 8-bit image (H, W, C) to a
/// (C, S, S) float tensor in [-1, 1]. Exposed for testing.
torch::Tensor preprocess_image(const torch::Tensor& hwc_uint8, int64_t image_size);

/// Procedural coloured shapes on random backgrounds. With classes, the class
/// determines the shape type and counts are balanced; unconditional data
/// mixes three shape types.
Dataset synth_shapes_dataset(int64_t n, int64_t image_size, int64_t num_classes, uint64_t seed);

/// Writes the dataset as PNG files (class subdirectories when conditional)
/// plus a manifest.tsv of path, label and SHA-256 digest.
void write_image_folder(const Dataset& dataset, const std::filesystem::path& root);

struct Batch {
    torch::Tensor images;
    std::optional<torch::Tensor> labels;
    std::vector<int64_t> indices;
    /// Conditional only: positions within the batch grouped by class.
    std::vector<std::vector<int64_t>> class_groups;
};

/// Sample order of one epoch, cut into full batches (ragged tail dropped).
std::vector<std::vector<int64_t>> epoch_batches(int64_t dataset_size, int64_t batch_size, uint64_t seed, int64_t epoch);

/// Materialized batches of one epoch.
std::vector<Batch> batches(const Dataset& dataset, int64_t batch_size, uint64_t seed, int64_t epoch);

/// The batch consumed at a global iteration; depends only on its arguments.
Batch batch_at(const Dataset& dataset, int64_t batch_size, uint64_t seed, int64_t iteration);

Batch gather(const Dataset& dataset, const std::vector<int64_t>& indices);

/// SHA-256 over the raw bytes of a contiguous tensor, hex encoded.
std::string tensor_digest(const torch::Tensor& t);
std::string sha256_hex(const void* data, size_t size);

}  // namespace unetgan

#endif

#pragma once

#include "dnetknn/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace dnetknn {

struct Example {
    Vector features;
    int label = 0;
};

// Labeled feature vectors. Features live in one row-major matrix (one row per
// example) with values in [0,1]; labels are class ids in [0, num_classes).
class Dataset {
public:
    Dataset() = default;

    // Validates shapes, label range and feature range.
    Dataset(Matrix features, std::vector<int> labels, int num_classes);

    std::size_t size() const { return labels_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
    int num_classes() const { return num_classes_; }
    bool empty() const { return labels_.empty(); }

    const Matrix& features() const { return features_; }
    const std::vector<int>& labels() const { return labels_; }
    int label(Index i) const { return labels_[i]; }
    Example example(Index i) const;

    // Rows at the given indices, in that order. Keeps num_classes.
    Dataset subset(std::span<const Index> indices) const;

    // Number of examples of each class.
    std::vector<std::size_t> class_counts() const;

private:
    Matrix features_;
    std::vector<int> labels_;
    int num_classes_ = 0;
};

struct SplitSpec {
    std::size_t per_class_train = 0;
    std::size_t per_class_test = 0;
    std::optional<std::uint64_t> shuffle_seed;
};

struct Split {
    Dataset train;
    Dataset test;
};

// Reads an IDX image/label file pair (magic 2051 / 2049, big-endian header,
// unsigned byte payload). Pixels are scaled by 1/255. The class count is
// max(label) + 1 unless `num_classes` is given.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<int> num_classes = std::nullopt);

// Writes features as round(255 * x) bytes. Image rows x cols must equal dim().
void save_idx(const Dataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels, std::uint32_t rows, std::uint32_t cols);

// Header-free CSV; first column an integer label, the rest real features.
Dataset load_csv(const std::filesystem::path& path, std::optional<int> num_classes = std::nullopt);
void save_csv(const Dataset& data, const std::filesystem::path& path);

// Per class: the first per_class_train examples go to train and the next
// per_class_test to test, in order of appearance (or after a seeded per-class
// shuffle). Output is grouped by class in ascending class order.
Split fixed_split(const Dataset& data, const SplitSpec& spec);

// Seeded random partition into consecutive chunks of batch_size indices; the
// last chunk may be smaller.
std::vector<std::vector<Index>> batch_indices(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed);
std::vector<Dataset> make_batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed);

} // namespace dnetknn

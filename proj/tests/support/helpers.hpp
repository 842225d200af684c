#pragma once

#include "dnetknn/dataset.hpp"
#include "dnetknn/types.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("dnetknn-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void put_be32(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

// Hand-rolled IDX writer, independent of the library's save_idx.
inline void write_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                           std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                           const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& y) {
    std::ofstream img(images, std::ios::binary);
    put_be32(img, 2051);
    put_be32(img, n);
    put_be32(img, rows);
    put_be32(img, cols);
    img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    std::ofstream lab(labels, std::ios::binary);
    put_be32(lab, 2049);
    put_be32(lab, n);
    lab.write(reinterpret_cast<const char*>(y.data()), static_cast<std::streamsize>(y.size()));
}

// Random dataset with `per_class` examples of each class, features uniform in
// [0,1] (or integer grid points / 255 when `quantized`).
inline dnetknn::Dataset random_dataset(std::mt19937_64& rng, int classes, std::size_t per_class,
                                       std::size_t dim, bool quantized = false) {
    const std::size_t n = static_cast<std::size_t>(classes) * per_class;
    dnetknn::Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    std::vector<int> labels(n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> byte(0, 255);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        labels[order[i]] = static_cast<int>(i % static_cast<std::size_t>(classes));
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x.data()[i] = quantized ? byte(rng) / 255.0 : u(rng);
    }
    return dnetknn::Dataset(std::move(x), std::move(labels), classes);
}

// Class-dependent Gaussian blobs clipped to [0,1].
inline dnetknn::Dataset blobs(std::mt19937_64& rng, int classes, std::size_t per_class, std::size_t dim,
                              double spread) {
    std::uniform_real_distribution<double> u(0.2, 0.8);
    std::normal_distribution<double> noise(0.0, spread);
    dnetknn::Matrix centers(classes, static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < centers.size(); ++i) {
        centers.data()[i] = u(rng);
    }
    const std::size_t n = static_cast<std::size_t>(classes) * per_class;
    dnetknn::Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
        labels[i] = c;
        for (std::size_t d = 0; d < dim; ++d) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
                std::clamp(centers(c, static_cast<Eigen::Index>(d)) + noise(rng), 0.0, 1.0);
        }
    }
    return dnetknn::Dataset(std::move(x), std::move(labels), classes);
}

inline dnetknn::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    dnetknn::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = n(rng);
    }
    return m;
}

inline std::filesystem::path data_dir() { return DNETKNN_DATA_DIR; }

} // namespace testing_support

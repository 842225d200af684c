#include "dnetknn/dataset.hpp"

#include "dnetknn/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

namespace dnetknn {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset,
                        const std::filesystem::path& path, const char* field) {
    if (buf.size() < offset + 4) {
        throw FormatError(path.string() + ": header too short to hold field '" + field + "'");
    }
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

int infer_classes(const std::vector<int>& labels, std::optional<int> num_classes) {
    if (num_classes) {
        return *num_classes;
    }
    int max_label = -1;
    for (int l : labels) {
        max_label = std::max(max_label, l);
    }
    return max_label + 1;
}

} // namespace

Dataset::Dataset(Matrix features, std::vector<int> labels, int num_classes)
    : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
        throw ConsistencyError("dataset: " + std::to_string(features_.rows()) + " feature rows but " +
                               std::to_string(labels_.size()) + " labels");
    }
    if (num_classes_ <= 0) {
        throw ConfigError("dataset: number of classes must be positive");
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] < 0 || labels_[i] >= num_classes_) {
            throw FormatError("dataset: label " + std::to_string(labels_[i]) + " of example " +
                              std::to_string(i) + " outside [0, " + std::to_string(num_classes_) + ")");
        }
    }
    const double* p = features_.data();
    for (Eigen::Index i = 0; i < features_.size(); ++i) {
        if (!std::isfinite(p[i]) || p[i] < 0.0 || p[i] > 1.0) {
            throw FormatError("dataset: feature value " + std::to_string(p[i]) + " of example " +
                              std::to_string(i / std::max<Eigen::Index>(1, features_.cols())) +
                              " outside [0,1]");
        }
    }
}

Example Dataset::example(Index i) const {
    return {features_.row(static_cast<Eigen::Index>(i)).transpose(), labels_[i]};
}

Dataset Dataset::subset(std::span<const Index> indices) const {
    Matrix f(static_cast<Eigen::Index>(indices.size()), features_.cols());
    std::vector<int> l;
    l.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= size()) {
            throw ConsistencyError("dataset subset: index " + std::to_string(indices[r]) +
                                   " out of range");
        }
        f.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(indices[r]));
        l.push_back(labels_[indices[r]]);
    }
    Dataset out;
    out.features_ = std::move(f);
    out.labels_ = std::move(l);
    out.num_classes_ = num_classes_;
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
    for (int l : labels_) {
        ++counts[static_cast<std::size_t>(l)];
    }
    return counts;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<int> num_classes) {
    const auto img = read_file(images);
    const auto lab = read_file(labels);

    const std::uint32_t img_magic = read_be32(img, 0, images, "magic");
    if (img_magic != kImageMagic) {
        throw FormatError(images.string() + ": bad magic " + std::to_string(img_magic) +
                          " (expected 2051)");
    }
    const std::uint32_t n_images = read_be32(img, 4, images, "image count");
    const std::uint32_t rows = read_be32(img, 8, images, "rows");
    const std::uint32_t cols = read_be32(img, 12, images, "cols");
    if (rows == 0 || cols == 0) {
        throw FormatError(images.string() + ": zero image rows or cols");
    }

    const std::uint32_t lab_magic = read_be32(lab, 0, labels, "magic");
    if (lab_magic != kLabelMagic) {
        throw FormatError(labels.string() + ": bad magic " + std::to_string(lab_magic) +
                          " (expected 2049)");
    }
    const std::uint32_t n_labels = read_be32(lab, 4, labels, "label count");

    if (n_images != n_labels) {
        throw ConsistencyError("image count " + std::to_string(n_images) + " != label count " +
                               std::to_string(n_labels));
    }
    const std::size_t dim = std::size_t{rows} * cols;
    const std::size_t expected_img = 16 + std::size_t{n_images} * dim;
    if (img.size() != expected_img) {
        throw ConsistencyError(images.string() + ": payload holds " + std::to_string(img.size()) +
                               " bytes, header implies " + std::to_string(expected_img));
    }
    if (lab.size() != 8 + std::size_t{n_labels}) {
        throw ConsistencyError(labels.string() + ": payload holds " + std::to_string(lab.size()) +
                               " bytes, header implies " + std::to_string(8 + std::size_t{n_labels}));
    }

    Matrix features(n_images, static_cast<Eigen::Index>(dim));
    const std::uint8_t* px = img.data() + 16;
    for (std::size_t i = 0; i < std::size_t{n_images} * dim; ++i) {
        features.data()[i] = px[i] / 255.0;
    }
    std::vector<int> y(lab.begin() + 8, lab.end());
    return Dataset(std::move(features), std::move(y), infer_classes(y, num_classes));
}

void save_idx(const Dataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels, std::uint32_t rows, std::uint32_t cols) {
    if (std::size_t{rows} * cols != data.dim()) {
        throw DimensionError("save_idx: " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " does not match dim " + std::to_string(data.dim()));
    }
    std::ofstream img(images, std::ios::binary);
    std::ofstream lab(labels, std::ios::binary);
    if (!img || !lab) {
        throw IoError("save_idx: cannot open output files");
    }
    const auto n = static_cast<std::uint32_t>(data.size());
    write_be32(img, kImageMagic);
    write_be32(img, n);
    write_be32(img, rows);
    write_be32(img, cols);
    std::vector<char> payload(data.size() * data.dim());
    const double* f = data.features().data();
    for (std::size_t i = 0; i < payload.size(); ++i) {
        payload[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(f[i] * 255.0)));
    }
    img.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    write_be32(lab, kLabelMagic);
    write_be32(lab, n);
    for (int l : data.labels()) {
        lab.put(static_cast<char>(l));
    }
    if (!img || !lab) {
        throw IoError("save_idx: write failed");
    }
}

Dataset load_csv(const std::filesystem::path& path, std::optional<int> num_classes) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const char* p = line.data();
        const char* end = p + line.size();
        std::size_t fields = 0;
        while (p <= end) {
            const char* comma = std::find(p, end, ',');
            if (fields == 0) {
                int label = 0;
                auto [q, ec] = std::from_chars(p, comma, label);
                if (ec != std::errc() || q != comma) {
                    throw FormatError(path.string() + ":" + std::to_string(line_no) +
                                      ": label is not an integer");
                }
                labels.push_back(label);
            } else {
                double v = 0.0;
                auto [q, ec] = std::from_chars(p, comma, v);
                if (ec != std::errc() || q != comma) {
                    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": field " +
                                      std::to_string(fields) + " is not a number");
                }
                values.push_back(v);
            }
            ++fields;
            p = comma + 1;
        }
        if (fields < 2) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": no feature columns");
        }
        if (dim == 0) {
            dim = fields - 1;
        } else if (fields - 1 != dim) {
            throw ConsistencyError(path.string() + ":" + std::to_string(line_no) + ": " +
                                   std::to_string(fields - 1) + " features, expected " +
                                   std::to_string(dim));
        }
    }
    Matrix features(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(dim));
    std::copy(values.begin(), values.end(), features.data());
    return Dataset(std::move(features), labels, infer_classes(labels, num_classes));
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    char buf[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.label(i);
        for (std::size_t j = 0; j < data.dim(); ++j) {
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf,
                                           data.features()(static_cast<Eigen::Index>(i),
                                                           static_cast<Eigen::Index>(j)));
            out << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

Split fixed_split(const Dataset& data, const SplitSpec& spec) {
    const auto classes = static_cast<std::size_t>(data.num_classes());
    std::vector<std::vector<Index>> by_class(classes);
    for (std::size_t i = 0; i < data.size(); ++i) {
        by_class[static_cast<std::size_t>(data.label(i))].push_back(i);
    }
    const std::size_t need = spec.per_class_train + spec.per_class_test;
    std::vector<Index> train, test;
    for (std::size_t c = 0; c < classes; ++c) {
        auto& members = by_class[c];
        if (members.size() < need) {
            throw CapacityError("split: class " + std::to_string(c) + " has " +
                                std::to_string(members.size()) + " examples, need " +
                                std::to_string(need));
        }
        if (spec.shuffle_seed) {
            std::mt19937_64 rng(*spec.shuffle_seed + c);
            std::shuffle(members.begin(), members.end(), rng);
        }
        train.insert(train.end(), members.begin(),
                     members.begin() + static_cast<std::ptrdiff_t>(spec.per_class_train));
        test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(spec.per_class_train),
                    members.begin() + static_cast<std::ptrdiff_t>(need));
    }
    return {data.subset(train), data.subset(test)};
}

std::vector<std::vector<Index>> batch_indices(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed) {
    if (batch_size == 0) {
        throw ConfigError("batch size must be positive");
    }
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<Index>> batches;
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
        const std::size_t end = std::min(n, begin + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

std::vector<Dataset> make_batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed) {
    if (batch_size < static_cast<std::size_t>(data.num_classes())) {
        throw ConfigError("batch size " + std::to_string(batch_size) +
                          " is smaller than the number of classes " +
                          std::to_string(data.num_classes()));
    }
    std::vector<Dataset> out;
    for (const auto& idx : batch_indices(data.size(), batch_size, seed)) {
        out.push_back(data.subset(idx));
    }
    return out;
}

} // namespace dnetknn

#include "dnetknn/classify.hpp"

#include "dnetknn/error.hpp"
#include "dnetknn/margin.hpp"
#include "dnetknn/parallel.hpp"

#include <algorithm>
#include <fstream>
#include <string>
#include <utility>

namespace dnetknn {

namespace {

using Candidate = std::pair<double, Index>;

void check_inputs(const Matrix& train_codes, std::span<const int> train_labels, Eigen::Index test_width) {
    if (train_codes.rows() == 0) {
        throw CapacityError("classifier needs at least one training code");
    }
    if (static_cast<std::size_t>(train_codes.rows()) != train_labels.size()) {
        throw DimensionError("classifier: " + std::to_string(train_codes.rows()) +
                             " training codes but " + std::to_string(train_labels.size()) + " labels");
    }
    if (test_width != train_codes.cols()) {
        throw DimensionError("classifier: test width " + std::to_string(test_width) +
                             " does not match training width " + std::to_string(train_codes.cols()));
    }
}

std::vector<Candidate> distances_to(const Matrix& train_codes, const RowVector& q) {
    std::vector<Candidate> d(static_cast<std::size_t>(train_codes.rows()));
    for (Eigen::Index r = 0; r < train_codes.rows(); ++r) {
        d[static_cast<std::size_t>(r)] = {(train_codes.row(r) - q).squaredNorm(), static_cast<Index>(r)};
    }
    return d;
}

// Squared distances from the query to the nearest `count` members of each class.
std::vector<std::vector<double>> nearest_per_class(const std::vector<Candidate>& dist,
                                                   std::span<const int> labels, int num_classes) {
    std::vector<std::vector<Candidate>> by_class(static_cast<std::size_t>(num_classes));
    for (const auto& c : dist) {
        by_class[static_cast<std::size_t>(labels[c.second])].push_back(c);
    }
    std::vector<std::vector<double>> out(by_class.size());
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::sort(by_class[c].begin(), by_class[c].end());
        out[c].reserve(by_class[c].size());
        for (const auto& cand : by_class[c]) {
            out[c].push_back(cand.first);
        }
    }
    return out;
}

double energy_from_sorted(const std::vector<std::vector<double>>& sorted, int candidate,
                          const NeighborConfig& cfg) {
    const auto& targets = sorted[static_cast<std::size_t>(candidate)];
    double e = 0.0;
    for (int l = 0; l < cfg.k; ++l) {
        for (std::size_t c = 0; c < sorted.size(); ++c) {
            if (static_cast<int>(c) == candidate) {
                continue;
            }
            for (int j = 0; j < cfg.m; ++j) {
                e += hinge(1.0 + targets[static_cast<std::size_t>(l)] - sorted[c][static_cast<std::size_t>(j)]);
            }
        }
    }
    return e;
}

void check_energy_capacity(std::span<const int> train_labels, int num_classes, const NeighborConfig& cfg) {
    cfg.validate();
    if (num_classes < 2) {
        throw CapacityError("energy classification needs at least two classes");
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int l : train_labels) {
        if (l < 0 || l >= num_classes) {
            throw ConsistencyError("training label " + std::to_string(l) + " outside [0, " +
                                   std::to_string(num_classes) + ")");
        }
        ++counts[static_cast<std::size_t>(l)];
    }
    const auto need = static_cast<std::size_t>(std::max(cfg.k, cfg.m));
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] < need) {
            throw CapacityError("energy classification: class " + std::to_string(c) + " has " +
                                std::to_string(counts[c]) + " training codes, needs " +
                                std::to_string(need));
        }
    }
}

} // namespace

namespace {

std::vector<Prediction> knn_vote(const Matrix& train_codes, std::span<const int> train_labels,
                                 const Matrix& test_codes, int k, bool exclude_self) {
    check_inputs(train_codes, train_labels, test_codes.cols());
    if (k < 1) {
        throw ConfigError("kNN needs k >= 1");
    }
    const std::size_t pool = train_labels.size() - (exclude_self ? 1 : 0);
    if (static_cast<std::size_t>(k) > pool) {
        throw CapacityError("kNN: k=" + std::to_string(k) + " exceeds the " + std::to_string(pool) +
                            " available training codes");
    }
    int max_label = 0;
    for (int l : train_labels) {
        max_label = std::max(max_label, l);
    }
    std::vector<Prediction> out(static_cast<std::size_t>(test_codes.rows()));
    parallel_for(out.size(), [&](std::size_t t) {
        auto dist = distances_to(train_codes, test_codes.row(static_cast<Eigen::Index>(t)));
        if (exclude_self) {
            dist.erase(dist.begin() + static_cast<std::ptrdiff_t>(t));
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        std::vector<int> votes(static_cast<std::size_t>(max_label) + 1, 0);
        int top = 0;
        for (int r = 0; r < k; ++r) {
            const int label = train_labels[dist[static_cast<std::size_t>(r)].second];
            top = std::max(top, ++votes[static_cast<std::size_t>(label)]);
        }
        // Neighbors are in distance order, so the first one from a class with
        // the top vote count decides vote ties.
        for (int r = 0; r < k; ++r) {
            const int label = train_labels[dist[static_cast<std::size_t>(r)].second];
            if (votes[static_cast<std::size_t>(label)] == top) {
                out[t] = {label, static_cast<double>(top)};
                break;
            }
        }
    });
    return out;
}

} // namespace

std::vector<Prediction> knn_predict(const Matrix& train_codes, std::span<const int> train_labels,
                                    const Matrix& test_codes, int k) {
    return knn_vote(train_codes, train_labels, test_codes, k, false);
}

std::vector<Prediction> knn_predict_leave_one_out(const Matrix& codes, std::span<const int> labels,
                                                  int k) {
    return knn_vote(codes, labels, codes, k, true);
}

double class_energy(const Matrix& train_codes, std::span<const int> train_labels, int num_classes,
                    const RowVector& test_code, int candidate, const NeighborConfig& cfg) {
    check_inputs(train_codes, train_labels, test_code.size());
    check_energy_capacity(train_labels, num_classes, cfg);
    if (candidate < 0 || candidate >= num_classes) {
        throw ConfigError("candidate class " + std::to_string(candidate) + " out of range");
    }
    const auto sorted = nearest_per_class(distances_to(train_codes, test_code), train_labels, num_classes);
    return energy_from_sorted(sorted, candidate, cfg);
}

Prediction energy_predict_one(const Matrix& train_codes, std::span<const int> train_labels,
                              int num_classes, const RowVector& test_code, const NeighborConfig& cfg) {
    check_inputs(train_codes, train_labels, test_code.size());
    check_energy_capacity(train_labels, num_classes, cfg);
    const auto sorted = nearest_per_class(distances_to(train_codes, test_code), train_labels, num_classes);
    Prediction best{0, 0.0};
    double best_energy = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        const double e = energy_from_sorted(sorted, c, cfg);
        if (c == 0 || e < best_energy) {
            best_energy = e;
            best = {c, -e};
        }
    }
    return best;
}

std::vector<Prediction> energy_predict(const Matrix& train_codes, std::span<const int> train_labels,
                                       int num_classes, const Matrix& test_codes,
                                       const NeighborConfig& cfg) {
    check_inputs(train_codes, train_labels, test_codes.cols());
    check_energy_capacity(train_labels, num_classes, cfg);
    std::vector<Prediction> out(static_cast<std::size_t>(test_codes.rows()));
    parallel_for(out.size(), [&](std::size_t t) {
        out[t] = energy_predict_one(train_codes, train_labels, num_classes,
                                    RowVector(test_codes.row(static_cast<Eigen::Index>(t))), cfg);
    });
    return out;
}

double error_rate(std::span<const Prediction> predictions, std::span<const int> true_labels) {
    if (predictions.size() != true_labels.size()) {
        throw DimensionError("error_rate: " + std::to_string(predictions.size()) + " predictions for " +
                             std::to_string(true_labels.size()) + " labels");
    }
    if (predictions.empty()) {
        return 0.0;
    }
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        wrong += predictions[i].label != true_labels[i] ? 1 : 0;
    }
    return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

void save_predictions(std::span<const Prediction> predictions, std::span<const int> true_labels,
                      const std::filesystem::path& path, bool header) {
    if (predictions.size() != true_labels.size()) {
        throw DimensionError("save_predictions: length mismatch");
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    if (header) {
        out << "index,true_label,predicted_label,score\n";
    }
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        out << i << ',' << true_labels[i] << ',' << predictions[i].label << ',' << predictions[i].score
            << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

} // namespace dnetknn

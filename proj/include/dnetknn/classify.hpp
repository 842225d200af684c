#pragma once

#include "dnetknn/neighbors.hpp"
#include "dnetknn/types.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace dnetknn {

struct Prediction {
    int label = 0;
    double score = 0.0; // votes for kNN, negative energy for energy mode
};

// Majority vote among the k nearest training codes (squared Euclidean).
// Distance ties go to the smaller index; vote ties go to whichever tied class
// owns the nearest of the k neighbors.
std::vector<Prediction> knn_predict(const Matrix& train_codes, std::span<const int> train_labels,
                                    const Matrix& test_codes, int k);

// Training-set kNN where each point is classified by the others (its own row
// is excluded from its neighbor list).
std::vector<Prediction> knn_predict_leave_one_out(const Matrix& codes, std::span<const int> labels,
                                                  int k);

// Energy of assigning `test_code` to `candidate`: the k nearest training codes
// of that class act as targets and the m nearest of every other class as
// impostors, all selected in code space.
double class_energy(const Matrix& train_codes, std::span<const int> train_labels, int num_classes,
                    const RowVector& test_code, int candidate, const NeighborConfig& cfg);

// argmin over classes of class_energy; ties go to the smaller class id.
Prediction energy_predict_one(const Matrix& train_codes, std::span<const int> train_labels,
                              int num_classes, const RowVector& test_code, const NeighborConfig& cfg);
std::vector<Prediction> energy_predict(const Matrix& train_codes, std::span<const int> train_labels,
                                       int num_classes, const Matrix& test_codes,
                                       const NeighborConfig& cfg);

double error_rate(std::span<const Prediction> predictions, std::span<const int> true_labels);

// `index,true_label,predicted_label,score` rows.
void save_predictions(std::span<const Prediction> predictions, std::span<const int> true_labels,
                      const std::filesystem::path& path, bool header = false);

} // namespace dnetknn

#pragma once

#include "dnetknn/encoder.hpp"
#include "dnetknn/neighbors.hpp"
#include "dnetknn/types.hpp"

namespace dnetknn {

// Sum over triples of hinge(1 + |y_i - y_l|^2 - |y_i - y_j|^2). Unnormalized.
struct MarginLoss {
    double value = 0.0;
    std::size_t active_triples = 0; // rows whose hinge argument is > 0
};

struct CodeGradResult {
    MarginLoss loss;
    Matrix grad; // d loss / d codes, same shape as the codes
};

struct ParamGradResult {
    MarginLoss loss;
    Vector grad; // aligned with flatten()
};

struct LinearBaselineConfig {
    double pull_weight = 1.0; // C, the coefficient on the hinge sum
};

struct LinearBaselineResult {
    double value = 0.0;     // pull + C * hinge
    double pull = 0.0;      // sum of distinct target-pair distances
    MarginLoss hinge;
    Vector grad;
};

// Sub-gradient at 0 is taken as 0.
inline double hinge(double z) { return z > 0.0 ? z : 0.0; }

MarginLoss margin_loss(const Matrix& codes, const TriplesTable& triples);

// For each active triple (i, l, j) the gradient adds
//   2 (y_j - y_l) to row i,  -2 (y_i - y_l) to row l,  2 (y_i - y_j) to row j.
CodeGradResult loss_and_code_grad(const Matrix& codes, const TriplesTable& triples);

// forward -> loss_and_code_grad -> backward.
ParamGradResult loss_and_param_grad(const EncoderParams& params, const Matrix& batch,
                                    const TriplesTable& triples);
MarginLoss margin_loss(const EncoderParams& params, const Matrix& batch, const TriplesTable& triples);

// Linear large-margin objective with the target-pull term, for a single linear
// layer encoder.
LinearBaselineResult linear_baseline_loss(const EncoderParams& params, const Matrix& batch,
                                          const TriplesTable& triples,
                                          const LinearBaselineConfig& cfg);

} // namespace dnetknn

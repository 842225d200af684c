#pragma once

#include "dnetknn/dataset.hpp"
#include "dnetknn/types.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace dnetknn {

// Binary-binary restricted Boltzmann machine.
//   E(v, h) = -v^T W h - b^T v - c^T h
// weights is numVisible x numHidden.
struct Rbm {
    Matrix weights;
    Vector visible_bias;
    Vector hidden_bias;

    std::size_t num_visible() const { return static_cast<std::size_t>(weights.rows()); }
    std::size_t num_hidden() const { return static_cast<std::size_t>(weights.cols()); }

    static Rbm zeros(std::size_t visible, std::size_t hidden);
    // N(0, stddev^2) weights, zero biases.
    static Rbm gaussian(std::size_t visible, std::size_t hidden, std::mt19937_64& rng,
                        double stddev = 0.01);
};

// Momentum starts at initial_momentum and switches to final_momentum once
// `momentum_switch_epoch` epochs have completed.
struct CdConfig {
    double learning_rate = 0.1;
    double initial_momentum = 0.5;
    double final_momentum = 0.9;
    int momentum_switch_epoch = 5;
    double weight_decay = 2e-4;
    int epochs = 10;
    std::size_t mini_batch = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

// Hyperparameters for a single CD-1 step.
struct CdStep {
    double learning_rate = 0.1;
    double momentum = 0.0;
    double weight_decay = 0.0;
};

// Running parameter increments for momentum.
struct RbmVelocity {
    Matrix weights;
    Vector visible_bias;
    Vector hidden_bias;

    static RbmVelocity zeros_like(const Rbm& rbm);
};

double sigmoid(double z);

double energy(const Rbm& rbm, const Vector& v, const Vector& h);

Vector hidden_given_visible(const Rbm& rbm, const Vector& v);
Vector visible_given_hidden(const Rbm& rbm, const Vector& h);
// Row-wise versions: one configuration per row.
Matrix hidden_probabilities(const Rbm& rbm, const Matrix& v);
Matrix visible_probabilities(const Rbm& rbm, const Matrix& h);

// Uniform draws used to sample the data-phase hidden states of one row. The
// stream depends only on (noise_seed, row_id), so a row gets the same noise
// wherever it sits in the batch.
std::mt19937_64 row_noise(std::uint64_t noise_seed, std::uint64_t row_id);

// One CD-1 update on a batch (rows are visible probability vectors).
// Data-phase hidden states are sampled binary; the reconstruction uses
// visible probabilities and hidden probabilities. Returns the mean squared
// reconstruction error of the batch before the update is applied. row_ids
// defaults to 0..rows-1.
double cd1_update(Rbm& rbm, RbmVelocity& velocity, const Matrix& batch, const CdStep& step,
                  std::uint64_t noise_seed, std::span<const std::uint64_t> row_ids = {});

struct LayerProgress {
    std::size_t layer = 0;
    int epoch = 0;
    double reconstruction_error = 0.0;
};
using PretrainCallback = std::function<void(const LayerProgress&)>;

// Full CD-1 training of one RBM over `data` (rows in [0,1]).
Rbm train_rbm(const Matrix& data, std::size_t hidden, const CdConfig& cfg,
              std::uint64_t layer_seed, const PretrainCallback& progress = {},
              std::size_t layer_index = 0);
// Same schedule, starting from `start` instead of a fresh N(0, 0.01^2) init.
Rbm train_rbm(const Matrix& data, Rbm start, const CdConfig& cfg, std::uint64_t layer_seed,
              const PretrainCallback& progress = {}, std::size_t layer_index = 0);

// Greedy layer-wise stack: RBM t is trained on the hidden probabilities that
// RBM t-1 produces for the data. layer_sizes[0] must equal data.dim().
std::vector<Rbm> train_stack(const Dataset& data, std::span<const std::size_t> layer_sizes,
                             const CdConfig& cfg, const PretrainCallback& progress = {});

// Mean log p(v) over the rows of `data` (binary rows), with log Z computed by
// enumerating all 2^(V+H) configurations. Requires V + H <= 20.
double exact_log_likelihood(const Rbm& rbm, const Matrix& data);
double exact_log_partition(const Rbm& rbm);

} // namespace dnetknn

#pragma once

#include "dnetknn/dataset.hpp"
#include "dnetknn/encoder.hpp"
#include "dnetknn/neighbors.hpp"
#include "dnetknn/rbm.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace dnetknn {

// ---------------------------------------------------------------------------
// Nonlinear conjugate gradient (Polak-Ribiere+, Armijo backtracking).
// ---------------------------------------------------------------------------

using ValueFn = std::function<double(const Vector&)>;
using ValueGradFn = std::function<double(const Vector&, Vector& grad)>;

struct CgOptions {
    int iterations = 3;
    double armijo = 1e-4;
    double shrink = 0.5;
    int max_backtracks = 50;
    // Parameter-space length of the first trial step when no previous step is
    // known.
    double initial_step = 1.0;
};

// Carried between calls so successive batches start from a sensible step.
struct CgState {
    double last_step_length = 0.0;
};

struct CgResult {
    std::vector<double> losses; // loss before the first and after every iteration
    int accepted_steps = 0;
};

CgResult conjugate_gradient(Vector& x, const ValueFn& value, const ValueGradFn& value_grad,
                            const CgOptions& opts, CgState& state);

// ---------------------------------------------------------------------------
// Fine-tuning driver.
// ---------------------------------------------------------------------------

enum class InitMode { rbm_pretrained, random };

struct TrainConfig {
    std::vector<std::size_t> layer_sizes{784, 500, 500, 2000, 30};
    NeighborConfig neighbors;
    std::size_t batch_size = 10000;
    int epochs = 5;
    int cg_line_searches = 3;
    std::uint64_t seed = 0;
    CdConfig pretraining;
    InitMode init = InitMode::rbm_pretrained;

    void validate(int num_classes) const;
};

struct EpochRecord {
    int epoch = 0; // 1-based
    double loss = 0.0;
    std::size_t active_triples = 0;
    double seconds = 0.0;
};

struct TrainReport {
    double initial_loss = 0.0;
    std::size_t initial_active_triples = 0;
    std::vector<EpochRecord> epochs;
    // One entry per batch visit: the CG loss trajectory on that batch.
    std::vector<std::vector<double>> cg_trajectories;
    int best_epoch = 0; // 0 means the initial parameters were never improved on
    std::string checkpoint_path;

    // `epoch,loss,active_triples,seconds`, one line per epoch.
    void write(std::ostream& out, bool header = false) const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Per epoch: re-batch with seed + epoch index, build triples inside each
// batch, and run cfg.cg_line_searches CG iterations on each batch. The
// returned parameters are those with the lowest end-of-epoch training loss
// (summed over that epoch's batches).
std::pair<EncoderParams, TrainReport> finetune(const Dataset& train, const TrainConfig& cfg,
                                               const EncoderParams& init,
                                               const EpochCallback& on_epoch = {});

// Greedy RBM stack (or Gaussian init for InitMode::random), then finetune.
EncoderParams initial_encoder(const Dataset& train, const TrainConfig& cfg,
                              const PretrainCallback& progress = {});
std::pair<EncoderParams, TrainReport> pretrain_then_finetune(const Dataset& train,
                                                             const TrainConfig& cfg,
                                                             const EpochCallback& on_epoch = {});

} // namespace dnetknn

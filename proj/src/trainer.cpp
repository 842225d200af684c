#include "dnetknn/trainer.hpp"

#include "dnetknn/error.hpp"
#include "dnetknn/margin.hpp"
#include "dnetknn/seeding.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace dnetknn {

namespace {

struct BatchProblem {
    Matrix features;
    TriplesTable triples;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// One line search along d from x. Returns the accepted alpha or 0.
double backtrack(const Vector& x, const Vector& d, double f, double slope, double alpha,
                 const ValueFn& value, const CgOptions& opts, double& f_new) {
    for (int b = 0; b < opts.max_backtracks; ++b) {
        const double trial = value(x + alpha * d);
        if (std::isfinite(trial) && trial <= f + opts.armijo * alpha * slope) {
            f_new = trial;
            return alpha;
        }
        alpha *= opts.shrink;
    }
    return 0.0;
}

} // namespace

CgResult conjugate_gradient(Vector& x, const ValueFn& value, const ValueGradFn& value_grad,
                            const CgOptions& opts, CgState& state) {
    if (opts.iterations < 0 || !(opts.shrink > 0.0 && opts.shrink < 1.0) || !(opts.initial_step > 0.0)) {
        throw ConfigError("conjugate_gradient: invalid options");
    }
    CgResult result;
    Vector g(x.size());
    double f = value_grad(x, g);
    if (!std::isfinite(f) || !g.allFinite()) {
        throw DivergenceError("conjugate_gradient: non-finite objective at the starting point");
    }
    result.losses.push_back(f);
    Vector d = -g;
    for (int it = 0; it < opts.iterations; ++it) {
        const double gg = g.squaredNorm();
        if (gg == 0.0) {
            result.losses.push_back(f);
            continue;
        }
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            d = -g;
            slope = -gg;
        }
        const double length = state.last_step_length > 0.0 ? 2.0 * state.last_step_length
                                                           : opts.initial_step;
        double f_new = f;
        double alpha = backtrack(x, d, f, slope, length / d.norm(), value, opts, f_new);
        if (alpha == 0.0 && slope != -gg) {
            // Conjugate direction failed; fall back to steepest descent.
            d = -g;
            slope = -gg;
            alpha = backtrack(x, d, f, slope, length / d.norm(), value, opts, f_new);
        }
        if (alpha == 0.0) {
            result.losses.push_back(f);
            continue;
        }
        x += alpha * d;
        state.last_step_length = alpha * d.norm();
        ++result.accepted_steps;

        Vector g_new(x.size());
        f = value_grad(x, g_new);
        if (!std::isfinite(f) || !g_new.allFinite()) {
            throw DivergenceError("conjugate_gradient: non-finite objective after a step");
        }
        const double beta = std::max(0.0, g_new.dot(g_new - g) / gg);
        d = -g_new + beta * d;
        g = std::move(g_new);
        result.losses.push_back(f);
    }
    return result;
}

void TrainConfig::validate(int num_classes) const {
    if (layer_sizes.size() < 2) {
        throw ConfigError("layer sizes need at least an input and a code width");
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) {
            throw ConfigError("layer sizes must be positive");
        }
    }
    neighbors.validate();
    if (epochs < 1) {
        throw ConfigError("epochs must be at least 1");
    }
    if (cg_line_searches < 1) {
        throw ConfigError("CG line searches per batch must be at least 1");
    }
    if (batch_size < 2 * static_cast<std::size_t>(num_classes)) {
        throw ConfigError("batch size " + std::to_string(batch_size) +
                          " must be at least twice the number of classes (" +
                          std::to_string(num_classes) + ")");
    }
    if (init == InitMode::rbm_pretrained) {
        pretraining.validate();
    }
}

void TrainReport::write(std::ostream& out, bool header) const {
    if (header) {
        out << "epoch,loss,active_triples,seconds\n";
    }
    for (const auto& e : epochs) {
        out << e.epoch << ',' << e.loss << ',' << e.active_triples << ',' << e.seconds << '\n';
    }
}

std::pair<EncoderParams, TrainReport> finetune(const Dataset& train, const TrainConfig& cfg,
                                               const EncoderParams& init,
                                               const EpochCallback& on_epoch) {
    cfg.validate(train.num_classes());
    init.validate();
    if (init.widths() != cfg.layer_sizes) {
        throw DimensionError("initial encoder widths do not match the configured layer sizes");
    }
    if (init.input_dim() != train.dim()) {
        throw DimensionError("encoder input " + std::to_string(init.input_dim()) +
                             " does not match data dimension " + std::to_string(train.dim()));
    }

    const EncoderParams shape = init;
    Vector theta = flatten(init);
    const std::size_t parameter_count = static_cast<std::size_t>(theta.size());

    TrainReport report;
    CgOptions cg;
    cg.iterations = cfg.cg_line_searches;
    CgState cg_state;

    // A single batch covering the whole set never changes membership, so its
    // triples are built once.
    const bool single_batch = cfg.batch_size >= train.size();
    std::vector<BatchProblem> problems;
    auto build_problems = [&](int epoch) {
        problems.clear();
        if (single_batch) {
            problems.push_back({train.features(), build_triples(train, cfg.neighbors)});
            return;
        }
        for (const auto& idx : batch_indices(train.size(), cfg.batch_size,
                                             cfg.seed + static_cast<std::uint64_t>(epoch))) {
            Dataset batch = train.subset(idx);
            TriplesTable triples = build_triples(batch, cfg.neighbors);
            problems.push_back({batch.features(), std::move(triples)});
        }
    };
    auto total_loss = [&](const EncoderParams& params) {
        MarginLoss total;
        for (const auto& p : problems) {
            const MarginLoss part = margin_loss(params, p.features, p.triples);
            total.value += part.value;
            total.active_triples += part.active_triples;
        }
        return total;
    };

    build_problems(0);
    const MarginLoss initial = total_loss(init);
    report.initial_loss = initial.value;
    report.initial_active_triples = initial.active_triples;

    EncoderParams best = init;
    double best_loss = initial.value;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        if (epoch > 0 && !single_batch) {
            build_problems(epoch);
        }
        for (std::size_t b = 0; b < problems.size(); ++b) {
            const BatchProblem& p = problems[b];
            auto value = [&](const Vector& v) {
                return margin_loss(unflatten(shape, {v.data(), static_cast<std::size_t>(v.size())}),
                                   p.features, p.triples)
                    .value;
            };
            auto value_grad = [&](const Vector& v, Vector& grad) {
                auto r = loss_and_param_grad(
                    unflatten(shape, {v.data(), static_cast<std::size_t>(v.size())}), p.features,
                    p.triples);
                grad = std::move(r.grad);
                return r.loss.value;
            };
            try {
                CgResult r = conjugate_gradient(theta, value, value_grad, cg, cg_state);
                report.cg_trajectories.push_back(std::move(r.losses));
            } catch (const DivergenceError& e) {
                throw DivergenceError("epoch " + std::to_string(epoch + 1) + ", batch " +
                                      std::to_string(b) + ": " + e.what());
            }
            if (static_cast<std::size_t>(theta.size()) != parameter_count) {
                throw ConsistencyError("parameter count changed during optimization");
            }
        }
        const EncoderParams current =
            unflatten(shape, {theta.data(), static_cast<std::size_t>(theta.size())});
        const MarginLoss loss = total_loss(current);
        if (!std::isfinite(loss.value)) {
            throw DivergenceError("epoch " + std::to_string(epoch + 1) + ": non-finite training loss");
        }
        EpochRecord record{epoch + 1, loss.value, loss.active_triples, seconds_since(start)};
        report.epochs.push_back(record);
        if (loss.value < best_loss) {
            best_loss = loss.value;
            best = current;
            report.best_epoch = epoch + 1;
        }
        if (on_epoch) {
            on_epoch(record);
        }
    }
    return {std::move(best), std::move(report)};
}

EncoderParams initial_encoder(const Dataset& train, const TrainConfig& cfg,
                              const PretrainCallback& progress) {
    cfg.validate(train.num_classes());
    if (cfg.layer_sizes.front() != train.dim()) {
        throw DimensionError("first layer size " + std::to_string(cfg.layer_sizes.front()) +
                             " does not match data dimension " + std::to_string(train.dim()));
    }
    if (cfg.init == InitMode::random) {
        return EncoderParams::gaussian(cfg.layer_sizes, mix_seed(cfg.seed, 0x52414e44));
    }
    CdConfig cd = cfg.pretraining;
    cd.seed = mix_seed(cfg.seed, 0x524d42);
    const auto stack = train_stack(train, cfg.layer_sizes, cd, progress);
    return from_rbm_stack(stack);
}

std::pair<EncoderParams, TrainReport> pretrain_then_finetune(const Dataset& train,
                                                             const TrainConfig& cfg,
                                                             const EpochCallback& on_epoch) {
    return finetune(train, cfg, initial_encoder(train, cfg), on_epoch);
}

} // namespace dnetknn

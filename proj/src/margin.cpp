#include "dnetknn/margin.hpp"

#include "dnetknn/error.hpp"
#include "dnetknn/parallel.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>

namespace dnetknn {

namespace {

// Fixed shard count: summation order depends only on the table, not on the
// number of worker threads.
constexpr std::size_t kShards = 16;

void check_indices(const Matrix& codes, const TriplesTable& triples) {
    const auto n = static_cast<std::size_t>(codes.rows());
    for (std::size_t r = 0; r < triples.size(); ++r) {
        const Triple& t = triples[r];
        if (t.anchor >= n || t.target >= n || t.impostor >= n) {
            throw ConsistencyError("triple " + std::to_string(r) + " references a row beyond the " +
                                   std::to_string(n) + " codes");
        }
    }
}

inline double argument(const Matrix& y, const Triple& t) {
    const auto i = static_cast<Eigen::Index>(t.anchor);
    const auto l = static_cast<Eigen::Index>(t.target);
    const auto j = static_cast<Eigen::Index>(t.impostor);
    return 1.0 + (y.row(i) - y.row(l)).squaredNorm() - (y.row(i) - y.row(j)).squaredNorm();
}

MarginLoss reduce(const std::vector<MarginLoss>& parts) {
    MarginLoss total;
    for (const auto& p : parts) {
        total.value += p.value;
        total.active_triples += p.active_triples;
    }
    return total;
}

void require_single_linear(const EncoderParams& params) {
    if (params.depth() != 1 || params.layers()[0].activation != Activation::linear) {
        throw ConfigError("linear baseline needs exactly one linear layer, got " +
                          std::to_string(params.depth()) + " layer(s)");
    }
}

} // namespace

MarginLoss margin_loss(const Matrix& codes, const TriplesTable& triples) {
    check_indices(codes, triples);
    std::vector<MarginLoss> parts(kShards);
    parallel_shards(triples.size(), kShards, [&](std::size_t s, std::size_t begin, std::size_t end) {
        MarginLoss part;
        for (std::size_t r = begin; r < end; ++r) {
            const double z = argument(codes, triples[r]);
            if (z > 0.0) {
                part.value += z;
                ++part.active_triples;
            }
        }
        parts[s] = part;
    });
    return reduce(parts);
}

CodeGradResult loss_and_code_grad(const Matrix& codes, const TriplesTable& triples) {
    check_indices(codes, triples);
    std::vector<MarginLoss> parts(kShards);
    std::vector<Matrix> grads(kShards);
    parallel_shards(triples.size(), kShards, [&](std::size_t s, std::size_t begin, std::size_t end) {
        MarginLoss part;
        Matrix g = Matrix::Zero(codes.rows(), codes.cols());
        for (std::size_t r = begin; r < end; ++r) {
            const Triple& t = triples[r];
            const double z = argument(codes, t);
            if (z <= 0.0) {
                continue;
            }
            part.value += z;
            ++part.active_triples;
            const auto i = static_cast<Eigen::Index>(t.anchor);
            const auto l = static_cast<Eigen::Index>(t.target);
            const auto j = static_cast<Eigen::Index>(t.impostor);
            g.row(i) += 2.0 * (codes.row(j) - codes.row(l));
            g.row(l) -= 2.0 * (codes.row(i) - codes.row(l));
            g.row(j) += 2.0 * (codes.row(i) - codes.row(j));
        }
        parts[s] = part;
        grads[s] = std::move(g);
    });
    CodeGradResult out{reduce(parts), Matrix::Zero(codes.rows(), codes.cols())};
    for (const auto& g : grads) {
        out.grad += g;
    }
    return out;
}

ParamGradResult loss_and_param_grad(const EncoderParams& params, const Matrix& batch,
                                    const TriplesTable& triples) {
    ForwardCache cache;
    const Matrix codes = forward(params, batch, cache);
    CodeGradResult code = loss_and_code_grad(codes, triples);
    const auto layer_grads = backward(params, cache, code.grad);
    return {code.loss, flatten(layer_grads)};
}

MarginLoss margin_loss(const EncoderParams& params, const Matrix& batch, const TriplesTable& triples) {
    return margin_loss(forward(params, batch), triples);
}

LinearBaselineResult linear_baseline_loss(const EncoderParams& params, const Matrix& batch,
                                          const TriplesTable& triples,
                                          const LinearBaselineConfig& cfg) {
    require_single_linear(params);
    if (cfg.pull_weight < 0.0) {
        throw ConfigError("linear baseline: pull weight C must be nonnegative");
    }
    ForwardCache cache;
    const Matrix codes = forward(params, batch, cache);
    CodeGradResult margin = loss_and_code_grad(codes, triples);

    LinearBaselineResult out;
    out.hinge = margin.loss;
    Matrix grad = cfg.pull_weight * margin.grad;
    std::vector<std::uint64_t> pairs;
    pairs.reserve(triples.size());
    for (const Triple& t : triples) {
        pairs.push_back((std::uint64_t{t.anchor} << 32) | t.target);
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    for (std::uint64_t key : pairs) {
        const auto i = static_cast<Eigen::Index>(key >> 32);
        const auto l = static_cast<Eigen::Index>(key & 0xFFFFFFFFULL);
        const RowVector diff = codes.row(i) - codes.row(l);
        out.pull += diff.squaredNorm();
        grad.row(i) += 2.0 * diff;
        grad.row(l) -= 2.0 * diff;
    }
    out.value = out.pull + cfg.pull_weight * out.hinge.value;
    out.grad = flatten(backward(params, cache, grad));
    return out;
}

} // namespace dnetknn

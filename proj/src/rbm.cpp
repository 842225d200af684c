#include "dnetknn/rbm.hpp"

#include "dnetknn/error.hpp"
#include "dnetknn/seeding.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dnetknn {

namespace {

Matrix sigmoid(Matrix z) {
    z = z.unaryExpr([](double x) { return dnetknn::sigmoid(x); });
    return z;
}

void check_finite(const Rbm& rbm) {
    if (!rbm.weights.allFinite() || !rbm.visible_bias.allFinite() || !rbm.hidden_bias.allFinite()) {
        throw DivergenceError("CD-1 update produced non-finite RBM parameters");
    }
}

double log_sum_exp(const std::vector<double>& xs) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : xs) {
        hi = std::max(hi, x);
    }
    double s = 0.0;
    for (double x : xs) {
        s += std::exp(x - hi);
    }
    return hi + std::log(s);
}

Vector bits(std::uint64_t pattern, std::size_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        v[static_cast<Eigen::Index>(i)] = static_cast<double>((pattern >> i) & 1U);
    }
    return v;
}

} // namespace

Rbm Rbm::zeros(std::size_t visible, std::size_t hidden) {
    const auto v = static_cast<Eigen::Index>(visible);
    const auto h = static_cast<Eigen::Index>(hidden);
    return {Matrix::Zero(v, h), Vector::Zero(v), Vector::Zero(h)};
}

Rbm Rbm::gaussian(std::size_t visible, std::size_t hidden, std::mt19937_64& rng, double stddev) {
    Rbm rbm = zeros(visible, hidden);
    std::normal_distribution<double> normal(0.0, stddev);
    for (Eigen::Index i = 0; i < rbm.weights.size(); ++i) {
        rbm.weights.data()[i] = normal(rng);
    }
    return rbm;
}

void CdConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("CD learning rate must be positive");
    }
    if (initial_momentum < 0.0 || initial_momentum >= 1.0 || final_momentum < 0.0 ||
        final_momentum >= 1.0) {
        throw ConfigError("CD momentum must lie in [0,1)");
    }
    if (weight_decay < 0.0) {
        throw ConfigError("CD weight decay must be nonnegative");
    }
    if (epochs < 1) {
        throw ConfigError("CD epochs must be at least 1");
    }
    if (mini_batch == 0) {
        throw ConfigError("CD mini-batch must be positive");
    }
}

RbmVelocity RbmVelocity::zeros_like(const Rbm& rbm) {
    return {Matrix::Zero(rbm.weights.rows(), rbm.weights.cols()),
            Vector::Zero(rbm.visible_bias.size()), Vector::Zero(rbm.hidden_bias.size())};
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double energy(const Rbm& rbm, const Vector& v, const Vector& h) {
    if (static_cast<std::size_t>(v.size()) != rbm.num_visible() ||
        static_cast<std::size_t>(h.size()) != rbm.num_hidden()) {
        throw DimensionError("energy: configuration sizes do not match the RBM");
    }
    return -v.dot(rbm.weights * h) - v.dot(rbm.visible_bias) - h.dot(rbm.hidden_bias);
}

Vector hidden_given_visible(const Rbm& rbm, const Vector& v) {
    if (static_cast<std::size_t>(v.size()) != rbm.num_visible()) {
        throw DimensionError("hidden_given_visible: expected " + std::to_string(rbm.num_visible()) +
                             " visible units, got " + std::to_string(v.size()));
    }
    Vector z = rbm.weights.transpose() * v + rbm.hidden_bias;
    return z.unaryExpr([](double x) { return sigmoid(x); });
}

Vector visible_given_hidden(const Rbm& rbm, const Vector& h) {
    if (static_cast<std::size_t>(h.size()) != rbm.num_hidden()) {
        throw DimensionError("visible_given_hidden: expected " + std::to_string(rbm.num_hidden()) +
                             " hidden units, got " + std::to_string(h.size()));
    }
    Vector z = rbm.weights * h + rbm.visible_bias;
    return z.unaryExpr([](double x) { return sigmoid(x); });
}

Matrix hidden_probabilities(const Rbm& rbm, const Matrix& v) {
    if (static_cast<std::size_t>(v.cols()) != rbm.num_visible()) {
        throw DimensionError("hidden_given_visible: expected " + std::to_string(rbm.num_visible()) +
                             " visible columns, got " + std::to_string(v.cols()));
    }
    Matrix z = v * rbm.weights;
    z.rowwise() += rbm.hidden_bias.transpose();
    return sigmoid(std::move(z));
}

Matrix visible_probabilities(const Rbm& rbm, const Matrix& h) {
    if (static_cast<std::size_t>(h.cols()) != rbm.num_hidden()) {
        throw DimensionError("visible_given_hidden: expected " + std::to_string(rbm.num_hidden()) +
                             " hidden columns, got " + std::to_string(h.cols()));
    }
    Matrix z = h * rbm.weights.transpose();
    z.rowwise() += rbm.visible_bias.transpose();
    return sigmoid(std::move(z));
}

std::mt19937_64 row_noise(std::uint64_t noise_seed, std::uint64_t row_id) {
    return std::mt19937_64(mix_seed(noise_seed, row_id));
}

double cd1_update(Rbm& rbm, RbmVelocity& velocity, const Matrix& batch, const CdStep& step,
                  std::uint64_t noise_seed, std::span<const std::uint64_t> row_ids) {
    const auto rows = batch.rows();
    if (rows == 0) {
        throw ConfigError("cd1_update: empty batch");
    }
    if (!row_ids.empty() && row_ids.size() != static_cast<std::size_t>(rows)) {
        throw DimensionError("cd1_update: row id count does not match batch rows");
    }
    const Matrix h0_prob = hidden_probabilities(rbm, batch);
    Matrix h0(h0_prob.rows(), h0_prob.cols());
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (Eigen::Index r = 0; r < rows; ++r) {
        auto rng = row_noise(noise_seed, row_ids.empty() ? static_cast<std::uint64_t>(r)
                                                          : row_ids[static_cast<std::size_t>(r)]);
        for (Eigen::Index j = 0; j < h0.cols(); ++j) {
            h0(r, j) = uniform(rng) < h0_prob(r, j) ? 1.0 : 0.0;
        }
    }
    const Matrix v1 = visible_probabilities(rbm, h0);
    const Matrix h1 = hidden_probabilities(rbm, v1);

    double reconstruction = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        reconstruction += (batch.row(r) - v1.row(r)).squaredNorm();
    }
    reconstruction /= static_cast<double>(rows * batch.cols());

    const double scale = 1.0 / static_cast<double>(rows);
    const Matrix grad_w = (batch.transpose() * h0 - v1.transpose() * h1) * scale;
    const Vector grad_b = (batch - v1).colwise().sum().transpose() * scale;
    const Vector grad_c = (h0 - h1).colwise().sum().transpose() * scale;

    velocity.weights = step.momentum * velocity.weights +
                       step.learning_rate * (grad_w - step.weight_decay * rbm.weights);
    velocity.visible_bias = step.momentum * velocity.visible_bias + step.learning_rate * grad_b;
    velocity.hidden_bias = step.momentum * velocity.hidden_bias + step.learning_rate * grad_c;
    rbm.weights += velocity.weights;
    rbm.visible_bias += velocity.visible_bias;
    rbm.hidden_bias += velocity.hidden_bias;
    check_finite(rbm);
    return reconstruction;
}

Rbm train_rbm(const Matrix& data, std::size_t hidden, const CdConfig& cfg,
              std::uint64_t layer_seed, const PretrainCallback& progress, std::size_t layer_index) {
    std::mt19937_64 init_rng(mix_seed(layer_seed, 1));
    return train_rbm(data, Rbm::gaussian(static_cast<std::size_t>(data.cols()), hidden, init_rng), cfg,
                     layer_seed, progress, layer_index);
}

Rbm train_rbm(const Matrix& data, Rbm rbm, const CdConfig& cfg, std::uint64_t layer_seed,
              const PretrainCallback& progress, std::size_t layer_index) {
    cfg.validate();
    if (static_cast<std::size_t>(data.cols()) != rbm.num_visible()) {
        throw DimensionError("train_rbm: data has " + std::to_string(data.cols()) + " columns, RBM has " +
                             std::to_string(rbm.num_visible()) + " visible units");
    }
    const auto n = static_cast<std::size_t>(data.rows());
    RbmVelocity velocity = RbmVelocity::zeros_like(rbm);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        CdStep step;
        step.learning_rate = cfg.learning_rate;
        step.momentum = epoch < cfg.momentum_switch_epoch ? cfg.initial_momentum : cfg.final_momentum;
        step.weight_decay = cfg.weight_decay;

        const std::uint64_t epoch_seed = mix_seed(layer_seed, 100 + static_cast<std::uint64_t>(epoch));
        double error_sum = 0.0;
        std::size_t batch_no = 0;
        for (const auto& idx : batch_indices(n, cfg.mini_batch, epoch_seed)) {
            Matrix batch(static_cast<Eigen::Index>(idx.size()), data.cols());
            std::vector<std::uint64_t> ids(idx.size());
            for (std::size_t r = 0; r < idx.size(); ++r) {
                batch.row(static_cast<Eigen::Index>(r)) = data.row(static_cast<Eigen::Index>(idx[r]));
                ids[r] = idx[r];
            }
            error_sum += cd1_update(rbm, velocity, batch, step, mix_seed(epoch_seed, batch_no), ids) *
                         static_cast<double>(idx.size());
            ++batch_no;
        }
        if (progress) {
            progress({layer_index, epoch, n ? error_sum / static_cast<double>(n) : 0.0});
        }
    }
    return rbm;
}

std::vector<Rbm> train_stack(const Dataset& data, std::span<const std::size_t> layer_sizes,
                             const CdConfig& cfg, const PretrainCallback& progress) {
    if (layer_sizes.size() < 2) {
        throw ConfigError("train_stack: need at least two layer sizes");
    }
    if (layer_sizes[0] != data.dim()) {
        throw DimensionError("train_stack: first layer size " + std::to_string(layer_sizes[0]) +
                             " does not match data dimension " + std::to_string(data.dim()));
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) {
            throw ConfigError("train_stack: layer sizes must be positive");
        }
    }
    cfg.validate();
    std::vector<Rbm> stack;
    Matrix input = data.features();
    for (std::size_t t = 0; t + 1 < layer_sizes.size(); ++t) {
        stack.push_back(train_rbm(input, layer_sizes[t + 1], cfg, mix_seed(cfg.seed, t), progress, t));
        if (t + 2 < layer_sizes.size()) {
            input = hidden_probabilities(stack.back(), input);
        }
    }
    return stack;
}

double exact_log_partition(const Rbm& rbm) {
    const std::size_t v = rbm.num_visible();
    const std::size_t h = rbm.num_hidden();
    if (v + h > 20) {
        throw CapacityError("exact partition function needs numVisible + numHidden <= 20, got " +
                            std::to_string(v + h));
    }
    std::vector<double> terms;
    terms.reserve(std::size_t{1} << (v + h));
    for (std::uint64_t pv = 0; pv < (std::uint64_t{1} << v); ++pv) {
        const Vector vis = bits(pv, v);
        for (std::uint64_t ph = 0; ph < (std::uint64_t{1} << h); ++ph) {
            terms.push_back(-energy(rbm, vis, bits(ph, h)));
        }
    }
    return log_sum_exp(terms);
}

double exact_log_likelihood(const Rbm& rbm, const Matrix& data) {
    if (static_cast<std::size_t>(data.cols()) != rbm.num_visible()) {
        throw DimensionError("exact_log_likelihood: data width does not match visible units");
    }
    const double log_z = exact_log_partition(rbm);
    const std::size_t h = rbm.num_hidden();
    double total = 0.0;
    std::vector<double> terms(std::size_t{1} << h);
    for (Eigen::Index r = 0; r < data.rows(); ++r) {
        const Vector vis = data.row(r).transpose();
        for (std::uint64_t ph = 0; ph < (std::uint64_t{1} << h); ++ph) {
            terms[ph] = -energy(rbm, vis, bits(ph, h));
        }
        total += log_sum_exp(terms) - log_z;
    }
    return data.rows() ? total / static_cast<double>(data.rows()) : 0.0;
}

} // namespace dnetknn

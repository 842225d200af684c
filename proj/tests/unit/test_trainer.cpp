#include "dnetknn/error.hpp"
#include "dnetknn/margin.hpp"
#include "dnetknn/trainer.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

#include <sstream>

using namespace dnetknn;

namespace {

using Widths = std::vector<std::size_t>;

TrainConfig small_config(Widths widths, int epochs, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.layer_sizes = std::move(widths);
    cfg.neighbors = {3, 3};
    cfg.batch_size = 100000;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.pretraining.epochs = 20;
    cfg.pretraining.mini_batch = 20;
    return cfg;
}

bool non_increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[i - 1]) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("conjugate gradient") {
    std::mt19937_64 rng(1);
    SUBCASE("convex quadratics never go up (property)") {
        for (int trial = 0; trial < 100; ++trial) {
            const Eigen::Index n = 2 + trial % 8;
            const Matrix b = testing_support::random_matrix(rng, n, n);
            const Matrix a = b.transpose() * b + Matrix::Identity(n, n) * 0.1;
            const Vector c = testing_support::random_matrix(rng, n, 1);
            auto value = [&](const Vector& x) { return 0.5 * x.dot(a * x) - c.dot(x); };
            auto value_grad = [&](const Vector& x, Vector& g) {
                g = a * x - c;
                return value(x);
            };
            Vector x = testing_support::random_matrix(rng, n, 1);
            CgState state;
            CgOptions opts;
            opts.iterations = 3 * static_cast<int>(n);
            const CgResult r = conjugate_gradient(x, value, value_grad, opts, state);
            REQUIRE(r.losses.size() == static_cast<std::size_t>(opts.iterations) + 1);
            REQUIRE(non_increasing(r.losses));
            REQUIRE(r.losses.back() < r.losses.front());
        }
    }
    SUBCASE("Rosenbrock valley") {
        auto value = [](const Vector& x) {
            return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
        };
        auto value_grad = [&](const Vector& x, Vector& g) {
            g.resize(2);
            g[0] = -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]);
            g[1] = 200.0 * (x[1] - x[0] * x[0]);
            return value(x);
        };
        Vector x{{-1.2, 1.0}};
        CgState state;
        CgOptions opts;
        opts.iterations = 2000;
        const CgResult r = conjugate_gradient(x, value, value_grad, opts, state);
        CHECK(non_increasing(r.losses));
        CHECK(r.losses.back() < 1e-2);
    }
    SUBCASE("non-finite start") {
        Vector x = Vector::Zero(2);
        CgState state;
        auto bad = [](const Vector&) { return std::numeric_limits<double>::quiet_NaN(); };
        auto bad_grad = [](const Vector& v, Vector& g) {
            g = v;
            return std::numeric_limits<double>::quiet_NaN();
        };
        CHECK_THROWS_AS(conjugate_gradient(x, bad, bad_grad, CgOptions{}, state), DivergenceError);
    }
}

TEST_CASE("configuration") {
    TrainConfig cfg;
    cfg.batch_size = 19;
    CHECK_THROWS_AS(cfg.validate(10), ConfigError);
    cfg.batch_size = 20;
    CHECK_NOTHROW(cfg.validate(10));
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(10), ConfigError);
    cfg.epochs = 1;
    cfg.neighbors.k = 0;
    CHECK_THROWS_AS(cfg.validate(10), ConfigError);

    std::mt19937_64 rng(2);
    const Dataset d = testing_support::random_dataset(rng, 3, 8, 6);
    const TrainConfig ok = small_config({6, 4, 2}, 1, 0);
    CHECK_THROWS_AS(finetune(d, ok, EncoderParams::gaussian(Widths{6, 5, 2}, 1)), DimensionError);
    CHECK_THROWS_AS(initial_encoder(d, small_config({7, 4, 2}, 1, 0)), DimensionError);
}

TEST_CASE("fine-tuning") {
    std::mt19937_64 rng(3);
    SUBCASE("single batch, three line searches") {
        const Dataset d = testing_support::blobs(rng, 3, 15, 6, 0.15);
        TrainConfig cfg = small_config({6, 5, 2}, 1, 4);
        const EncoderParams init = initial_encoder(d, cfg);
        const auto [params, report] = finetune(d, cfg, init);
        REQUIRE(report.cg_trajectories.size() == 1u);
        CHECK(report.cg_trajectories[0].size() == 4u);
        CHECK(non_increasing(report.cg_trajectories[0]));
        CHECK(report.epochs.size() == 1u);
        CHECK(report.cg_trajectories[0].front() == doctest::Approx(report.initial_loss));
        CHECK(report.epochs[0].loss == doctest::Approx(report.cg_trajectories[0].back()));
    }
    SUBCASE("Gaussian blobs collapse the loss") {
        const Dataset d = testing_support::blobs(rng, 3, 100, 10, 0.12);
        TrainConfig cfg = small_config({10, 8, 2}, 10, 7);
        cfg.neighbors = {5, 5};
        const auto [params, report] = pretrain_then_finetune(d, cfg);
        CHECK(report.epochs.size() == 10u);
        const double final_loss = margin_loss(params, d.features(), build_triples(d, cfg.neighbors)).value;
        CHECK(final_loss < 0.01 * report.initial_loss);
    }
    SUBCASE("mini-batches and per-epoch records") {
        const Dataset d = testing_support::blobs(rng, 3, 40, 6, 0.15);
        TrainConfig cfg = small_config({6, 5, 2}, 3, 9);
        cfg.batch_size = 40;
        cfg.init = InitMode::random;
        std::vector<int> seen;
        const auto [params, report] =
            finetune(d, cfg, initial_encoder(d, cfg), [&](const EpochRecord& e) { seen.push_back(e.epoch); });
        CHECK(seen == std::vector<int>{1, 2, 3});
        CHECK(report.cg_trajectories.size() == 9u);
        for (const auto& t : report.cg_trajectories) {
            CHECK(non_increasing(t));
        }
        std::ostringstream out;
        report.write(out, true);
        const std::string text = out.str();
        CHECK(text.rfind("epoch,loss,active_triples,seconds\n1,", 0) == 0);
        CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    }
    SUBCASE("same seed, same result") {
        const Dataset d = testing_support::blobs(rng, 3, 30, 6, 0.15);
        TrainConfig cfg = small_config({6, 5, 2}, 2, 11);
        const auto a = pretrain_then_finetune(d, cfg);
        const auto b = pretrain_then_finetune(d, cfg);
        CHECK(a.first == b.first);
        CHECK(a.second.epochs.back().loss == b.second.epochs.back().loss);
    }
    SUBCASE("degenerate depth gives the linear pipeline") {
        const Dataset d = testing_support::blobs(rng, 3, 30, 8, 0.2);
        TrainConfig cfg = small_config({8, 2}, 3, 13);
        const auto [params, report] = pretrain_then_finetune(d, cfg);
        REQUIRE(params.depth() == 1);
        CHECK(params.layers()[0].activation == Activation::linear);
        CHECK(report.epochs.back().loss < report.initial_loss);
        CHECK_NOTHROW(linear_baseline_loss(params, d.features(), build_triples(d, cfg.neighbors), {1.0}));
    }
}

TEST_CASE("pretrained start beats random start on digits") {
    const Dataset all = load_csv(testing_support::data_dir() / "digits.csv", 10);
    const Dataset train = fixed_split(all, {30, 0, 1}).train;
    TrainConfig cfg = small_config({64, 100, 100, 200, 10}, 5, 1);
    cfg.neighbors = {3, 5};
    cfg.pretraining.epochs = 30;
    const auto pretrained = pretrain_then_finetune(train, cfg);
    cfg.init = InitMode::random;
    const auto random = pretrain_then_finetune(train, cfg);
    CHECK(pretrained.second.epochs.back().loss < random.second.epochs.back().loss);
}

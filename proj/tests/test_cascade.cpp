#include <doctest.h>

#include <cmath>

#include "ltvforge/cascade.hpp"
#include "ltvforge/errors.hpp"
#include "ltvforge/rng.hpp"

using namespace ltvforge;

namespace {

BucketSpec spec_with_thresholds(std::vector<double> taus) {
    BucketSpec spec;
    spec.k = static_cast<int>(taus.size()) + 1;
    spec.thresholds = std::move(taus);
    spec.centers.assign(spec.k, 0.0);
    spec.half_ranges.assign(spec.k, 1.0);
    spec.top_cap = spec.thresholds.back() * 2.0;
    return spec;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("bucket distribution applies the chain rule") {
    const double p[] = {0.5, 0.5, 0.5};
    const auto dist = bucket_distribution(p);
    REQUIRE(dist.size() == 4);
    CHECK(dist[0] == doctest::Approx(0.5));
    CHECK(dist[1] == doctest::Approx(0.25));
    CHECK(dist[2] == doctest::Approx(0.125));
    CHECK(dist[3] == doctest::Approx(0.125));
}

TEST_CASE("bucket distribution limits") {
    const double all_pass[] = {1.0 - 1e-15, 1.0 - 1e-15, 1.0 - 1e-15};
    const auto top = bucket_distribution(all_pass);
    CHECK(top[3] == doctest::Approx(1.0));

    const double first_fails[] = {1e-4, 0.3, 0.9};
    const auto bottom = bucket_distribution(first_fails);
    CHECK(bottom[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(bottom[1] + bottom[2] + bottom[3] == doctest::Approx(0.0).epsilon(1e-3));
}

TEST_CASE("telescoping and survival identities hold for random marginals") {
    RngStream rng(99);
    for (int k = 2; k <= 8; ++k) {
        for (int trial = 0; trial < 2000; ++trial) {
            std::vector<double> p(static_cast<std::size_t>(k - 1));
            for (double& v : p) v = rng.uniform01();
            const auto dist = bucket_distribution(p);
            double sum = 0.0;
            for (double d : dist) {
                CHECK(d >= 0.0);
                CHECK(d <= 1.0);
                sum += d;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-9);
            // survival: sum_{j>=b} P(j) == prod_{j<b} p_j
            for (int b = 1; b <= k; ++b) {
                double tail = 0.0;
                for (int j = b; j <= k; ++j) tail += dist[j - 1];
                double survive = 1.0;
                for (int j = 0; j < b - 1; ++j) survive *= p[j];
                CHECK(std::abs(tail - survive) <= 1e-9);
            }
        }
    }
}

TEST_CASE("bucket distribution backward matches finite differences") {
    RngStream rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p(3);
        for (double& v : p) v = 0.05 + 0.9 * rng.uniform01();
        std::vector<double> upstream(4);
        for (double& v : upstream) v = rng.normal();

        const auto grad = bucket_distribution_backward(p, upstream);
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double eps = 1e-7;
            auto value = [&](double pj) {
                std::vector<double> q = p;
                q[j] = pj;
                const auto dist = bucket_distribution(q);
                double acc = 0.0;
                for (std::size_t b = 0; b < dist.size(); ++b) acc += upstream[b] * dist[b];
                return acc;
            };
            const double numeric = (value(p[j] + eps) - value(p[j] - eps)) / (2 * eps);
            CHECK(grad[j] == doctest::Approx(numeric).epsilon(1e-6));
        }
    }
}

TEST_CASE("sequential decision rule") {
    const double a[] = {0.9, 0.4, 0.8};
    CHECK(predict_bucket(a) == 2);
    const double b[] = {0.6, 0.7, 0.51};
    CHECK(predict_bucket(b) == 4);
    const double c[] = {0.5, 0.9, 0.9};
    CHECK(predict_bucket(c) == 1);  // threshold ties count as failure
}

TEST_CASE("raising any marginal never lowers the predicted bucket") {
    RngStream rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> p(3);
        for (double& v : p) v = rng.uniform01();
        const int before = predict_bucket(p);
        const std::size_t j = rng.next_u64() % 3;
        p[j] = p[j] + (1.0 - p[j]) * rng.uniform01();
        CHECK(predict_bucket(p) >= before);
    }
}

TEST_CASE("cascade loss hand values") {
    CascadeConfig cfg;
    cfg.k = 2;
    cfg.head_depths = {1};
    cfg.head_l2 = {0.0};
    cfg.head_dropout = {0.0};
    cfg.stage_weights = {1.0};
    cfg.negative_upweights = {3.0};
    const BucketSpec spec = spec_with_thresholds({1.0});

    Matrix logits(1, 1);
    logits(0, 0) = 0.0;  // p = 0.5
    const std::vector<double> positive = {2.0};  // above tau -> target 1
    CHECK(cascade_loss(logits, positive, spec, cfg) == doctest::Approx(std::log(2.0)));

    const std::vector<double> negative = {0.5};  // below tau -> target 0, up-weighted x3
    CHECK(cascade_loss(logits, negative, spec, cfg) == doctest::Approx(3.0 * std::log(2.0)));
}

TEST_CASE("confident correct predictions drive the cascade loss to zero") {
    CascadeConfig cfg;
    cfg.k = 4;
    const BucketSpec spec = spec_with_thresholds({1e-6, 10.0, 20.0});
    Matrix logits(2, 3);
    const std::vector<double> labels = {0.0, 25.0};
    // sample 0 in bucket 1: all targets 0; sample 1 in bucket 4: all targets 1
    for (std::size_t j = 0; j < 3; ++j) {
        logits(0, j) = -40.0;
        logits(1, j) = 40.0;
    }
    CHECK(cascade_loss(logits, labels, spec, cfg) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cascade loss gradient matches finite differences") {
    CascadeConfig cfg;
    cfg.k = 4;
    const BucketSpec spec = spec_with_thresholds({1e-6, 5.0, 15.0});
    RngStream rng(13);
    Matrix logits(6, 3);
    for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
    const std::vector<double> labels = {0.0, 2.0, 7.0, 20.0, 0.0, 100.0};

    const Matrix grad = cascade_loss_backward(logits, labels, spec, cfg);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            const double eps = 1e-6;
            const double saved = logits(i, j);
            logits(i, j) = saved + eps;
            const double up = cascade_loss(logits, labels, spec, cfg);
            logits(i, j) = saved - eps;
            const double down = cascade_loss(logits, labels, spec, cfg);
            logits(i, j) = saved;
            CHECK(grad(i, j) == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-5));
        }
    }
}

TEST_CASE("distillation loss is zero when distributions match") {
    // logits chosen so every sample's bucket distribution is [.5,.25,.125,.125]
    Matrix logits(8, 3);
    for (std::size_t i = 0; i < 8; ++i) {
        logits(i, 0) = 0.0;
        logits(i, 1) = 0.0;
        logits(i, 2) = 0.0;
    }
    // empirical frequencies 4/2/1/1 over 8 samples match exactly
    const std::vector<int> buckets = {1, 1, 1, 1, 2, 2, 3, 4};
    CHECK(distill_loss(logits, buckets, 4, 1.0) <= 1e-6);
}

TEST_CASE("distillation loss hand value against the uniform prediction") {
    // marginals (3/4, 2/3, 1/2) make the predicted distribution uniform
    Matrix logits(8, 3);
    for (std::size_t i = 0; i < 8; ++i) {
        logits(i, 0) = logit(0.75);
        logits(i, 1) = logit(2.0 / 3.0);
        logits(i, 2) = logit(0.5);
    }
    const std::vector<int> buckets = {1, 1, 1, 1, 2, 2, 3, 4};  // q_true = [.5,.25,.125,.125]
    const double expected = 0.25 * std::log(2.0);               // sum q ln(q/0.25)
    CHECK(distill_loss(logits, buckets, 4, 1.0) == doctest::Approx(expected).epsilon(1e-3));
}

TEST_CASE("high temperature washes the predicted distribution toward the default") {
    RngStream rng(3);
    Matrix logits(16, 3);
    for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = 3.0 * rng.normal();
    const auto stats = distill_stats(logits, std::vector<int>(16, 1), 4, 1e9);
    const double half[] = {0.5, 0.5, 0.5};
    const auto reference = bucket_distribution(half);
    for (int b = 0; b < 4; ++b) CHECK(stats.q_pred[b] == doctest::Approx(reference[b]).epsilon(1e-6));
}

TEST_CASE("distillation loss is non-negative and detects mismatch direction") {
    RngStream rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix logits(8, 3);
        for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
        std::vector<int> buckets(8);
        for (auto& b : buckets) b = 1 + static_cast<int>(rng.next_u64() % 4);
        CHECK(distill_loss(logits, buckets, 4, 1.5) >= 0.0);
    }
    CHECK_THROWS_AS(distill_loss(Matrix(0, 3), std::vector<int>{}, 4, 1.0), InputError);
}

TEST_CASE("distillation gradient matches finite differences") {
    RngStream rng(23);
    Matrix logits(6, 3);
    for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
    const std::vector<int> buckets = {1, 2, 3, 4, 1, 2};
    const double temperature = 1.7;

    const Matrix grad = distill_loss_backward(logits, buckets, 4, temperature);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            const double eps = 1e-6;
            const double saved = logits(i, j);
            logits(i, j) = saved + eps;
            const double up = distill_loss(logits, buckets, 4, temperature);
            logits(i, j) = saved - eps;
            const double down = distill_loss(logits, buckets, 4, temperature);
            logits(i, j) = saved;
            CHECK(grad(i, j) == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-5));
        }
    }
}

TEST_CASE("temperature schedule endpoints") {
    CHECK(temperature_schedule(0, 100) == doctest::Approx(2.0));
    CHECK(temperature_schedule(100, 100) == doctest::Approx(1.0));
    CHECK(temperature_schedule(50, 100) == doctest::Approx(1.5));
}

TEST_CASE("cascade heads: zero final layers emit 0.5 marginals and K=2 degenerates") {
    ParamSet params;
    RngStream rng(31);
    CascadeConfig cfg;
    cfg.k = 2;
    cfg.head_hidden = 4;
    cfg.head_depths = {1};
    cfg.head_l2 = {0.01};
    cfg.head_dropout = {0.0};
    cfg.stage_weights = {1.0};
    cfg.negative_upweights = {1.0};

    CascadeHeads heads;
    heads.init(params, cfg, 3, rng);
    // zero the scalar output layers
    for (auto& head : heads.heads) {
        head.head.weight->value.fill(0.0);
        head.head.bias->value.fill(0.0);
    }
    Matrix h(2, 3);
    h(0, 0) = 1.0;
    h(1, 2) = -2.0;
    const Matrix logits = heads.forward(h, Mode::kInfer, nullptr);
    const auto out = cascade_output_from_logits(logits, 0.5);
    CHECK(out.marginals(0, 0) == doctest::Approx(0.5));
    CHECK(out.bucket_probs(0, 0) == doctest::Approx(0.5));
    CHECK(out.bucket_probs(0, 1) == doctest::Approx(0.5));
    CHECK(out.predicted[0] == 1);

    const Matrix again = heads.forward(h, Mode::kInfer, nullptr);
    CHECK(logits == again);  // determinism with dropout off
}

TEST_CASE("per-level config lists must match K-1") {
    CascadeConfig cfg;
    cfg.k = 5;  // defaults sized for K=4
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

#include <doctest.h>

#include <numeric>
#include <random>

#include "otmatch/nn.hpp"
#include "test_util.hpp"

using namespace otmatch;

bool thresholds_argmax_equal(const Vector& a, const Vector& b);

TEST_CASE("softmax basics") {
    CHECK(nn::softmax({0.0, 0.0})[0] == doctest::Approx(0.5).epsilon(1e-12));
    // frozen against arbitrary-precision evaluation
    const Vector p = nn::softmax({1.0, 0.0});
    CHECK(p[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.2689414213699951).epsilon(1e-12));

    const Vector sharp = nn::softmax({1.0, 0.0}, 0.01);
    CHECK(sharp[0] > 0.999999);
    CHECK(sharp[1] < 1e-6);
}

TEST_CASE("softmax is a valid probability vector and temperature keeps argmax") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-20.0, 20.0);
    std::uniform_real_distribution<double> temps(0.01, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        Vector logits(2 + trial % 7);
        for (double& l : logits) l = unif(rng);
        const Vector p = nn::softmax(logits);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        const Vector q = nn::softmax(logits, temps(rng));
        CHECK(thresholds_argmax_equal(p, q));
    }
}

// helper kept out of the harness macro above
static bool argmax_of(const Vector& v, std::size_t& out) {
    out = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    return true;
}
bool thresholds_argmax_equal(const Vector& a, const Vector& b) {
    std::size_t i, j;
    argmax_of(a, i);
    argmax_of(b, j);
    return i == j;
}

TEST_CASE("hard softmax limit") {
    const Vector p = nn::softmax({0.3, 1.7, -2.0}, 0.0);
    CHECK(p == Vector{0.0, 1.0, 0.0});
}

TEST_CASE("forward shapes and head semantics") {
    std::mt19937_64 rng(3);
    nn::ModelParams params = nn::make_mlp(4, {8, 6}, 3, rng);
    const Vector x = {0.1, -0.3, 0.7, 0.2};
    const nn::ForwardResult fr = nn::forward(params, x);
    CHECK(fr.features.size() == 6);
    CHECK(fr.logits.size() == 3);
    // logits = features . W
    const Vector expect = matvec_transposed(params.head, fr.features);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(fr.logits[k] == doctest::Approx(expect[k]).epsilon(1e-12));
    CHECK_THROWS_AS(nn::forward(params, {1.0, 2.0}), DimensionError);
}

TEST_CASE("backward feature gradient matches the closed CE form") {
    // single sample, CE against target k: dL/dfeatures = -(1-p_k) w_k + sum p_k' w_k'
    std::mt19937_64 rng(5);
    nn::ModelParams params = nn::make_mlp(3, {}, 3, rng);  // pure head, features = x
    const Vector x = {0.4, -0.2, 0.9};
    const nn::ForwardCache cache = nn::forward_cached(params, x);
    const std::size_t target = 1;
    Vector dlogits = cache.probs;
    dlogits[target] -= 1.0;
    // with no extractor layers there is nothing upstream of the head; check
    // the head gradient instead: dW(f,k) = x_f (p_k - 1{k==target})
    const nn::ParamGrads g = nn::backward(params, cache, dlogits);
    for (std::size_t f = 0; f < 3; ++f)
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(g.head.at(f, k) ==
                  doctest::Approx(x[f] * (cache.probs[k] - (k == target ? 1.0 : 0.0)))
                      .epsilon(1e-12));
}

TEST_CASE("K=2 symmetric probs feature gradient is -0.5 w1 + 0.5 w2") {
    nn::ModelParams params;
    params.head = DenseMatrix(2, 2);
    // equal-norm columns so logits tie and p = (0.5, 0.5)
    params.head.at(0, 0) = 1.0;
    params.head.at(1, 0) = 0.3;
    params.head.at(0, 1) = 0.3;
    params.head.at(1, 1) = 1.0;
    const Vector x = {0.7, 0.7};
    const nn::ForwardCache cache = nn::forward_cached(params, x);
    REQUIRE(cache.probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    Vector dlogits = cache.probs;
    dlogits[0] -= 1.0;  // target class 0
    const Vector dfeat = matvec(params.head, dlogits);
    for (std::size_t f = 0; f < 2; ++f)
        CHECK(dfeat[f] == doctest::Approx(-0.5 * params.head.at(f, 0) +
                                          0.5 * params.head.at(f, 1))
                              .epsilon(1e-12));
}

TEST_CASE("CE gradients match finite differences on random small nets") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        nn::ModelParams params = nn::make_mlp(4, {9, 7}, 3, rng);
        Vector x(4);
        for (double& v : x) v = gauss(rng);
        const std::size_t target = static_cast<std::size_t>(trial % 3);

        const auto ce = [&]() {
            const nn::ForwardResult fr = nn::forward(params, x);
            return -std::log(fr.probs[target]);
        };
        const std::vector<double> fd = testutil::fd_gradient(params, ce);
        const nn::ForwardCache cache = nn::forward_cached(params, x);
        Vector dlogits = cache.probs;
        dlogits[target] -= 1.0;
        const std::vector<double> analytic =
            testutil::flatten_grads(nn::backward(params, cache, dlogits));
        CHECK(testutil::grad_rel_error(analytic, fd) < 1e-4);
    }
}

TEST_CASE("sgd step arithmetic") {
    nn::ModelParams p;
    p.head = DenseMatrix(1, 1);
    p.head.at(0, 0) = 1.0;
    nn::OptimizerState opt = nn::OptimizerState::init(p, 0.1, 100, 0.0, 0.0);
    nn::ParamGrads g = nn::ParamGrads::zeros_like(p);
    g.head.at(0, 0) = 2.0;
    nn::sgd_step(p, opt, g);
    CHECK(p.head.at(0, 0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(opt.step == 1);

    // zero grad, zero velocity: unchanged
    nn::ModelParams q;
    q.head = DenseMatrix(1, 1);
    q.head.at(0, 0) = 0.5;
    nn::OptimizerState opt2 = nn::OptimizerState::init(q, 0.1, 100, 0.0, 0.0);
    nn::sgd_step(q, opt2, nn::ParamGrads::zeros_like(q));
    CHECK(q.head.at(0, 0) == 0.5);

    // momentum carries velocity
    nn::ModelParams r;
    r.head = DenseMatrix(1, 1);
    nn::OptimizerState opt3 = nn::OptimizerState::init(r, 0.1, 100, 0.9, 0.0);
    opt3.velocity.head.at(0, 0) = 1.0;
    nn::sgd_step(r, opt3, nn::ParamGrads::zeros_like(r));
    CHECK(opt3.velocity.head.at(0, 0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(r.head.at(0, 0) == doctest::Approx(-0.09).epsilon(1e-12));

    nn::ParamGrads bad = nn::ParamGrads::zeros_like(r);
    bad.head.at(0, 0) = std::nan("");
    CHECK_THROWS_AS(nn::sgd_step(r, opt3, bad), NumericError);
}

TEST_CASE("cosine schedule endpoints and monotonicity") {
    CHECK(nn::cosine_lr(0, 100, 0.03) == doctest::Approx(0.03).epsilon(1e-15));
    CHECK(nn::cosine_lr(100, 100, 0.03) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(nn::cosine_lr(50, 100, 0.03) == doctest::Approx(0.015).epsilon(1e-12));
    double prev = 1.0;
    for (std::size_t t = 0; t <= 100; ++t) {
        const double lr = nn::cosine_lr(t, 100, 0.03);
        CHECK(lr <= prev + 1e-15);
        prev = lr;
    }
    CHECK_THROWS_AS(nn::cosine_lr(101, 100, 0.03), std::out_of_range);
}

TEST_CASE("teacher EMA is a convex combination") {
    std::mt19937_64 rng(23);
    nn::ModelParams student = nn::make_mlp(3, {4}, 2, rng);
    nn::TeacherParams teacher{student, 0.0};
    nn::ModelParams other = nn::make_mlp(3, {4}, 2, rng);

    teacher.params = other;
    teacher.ema_decay = 0.0;
    nn::ema_update(teacher, student);
    CHECK(teacher.params.head.values == student.head.values);

    teacher.params = other;
    teacher.ema_decay = 1.0 - 1e-18;  // effectively 1
    teacher.ema_decay = 1.0;
    nn::ema_update(teacher, student);
    CHECK(teacher.params.head.values == other.head.values);

    nn::TeacherParams t3{student, 0.999};
    t3.params.head.at(0, 0) = 1.0;
    nn::ModelParams s3 = student;
    s3.head.at(0, 0) = 0.0;
    nn::ema_update(t3, s3);
    CHECK(t3.params.head.at(0, 0) == doctest::Approx(0.999).epsilon(1e-15));

    // convexity over random pairs
    nn::TeacherParams t4{nn::make_mlp(3, {4}, 2, rng), 0.7};
    const nn::ModelParams old = t4.params;
    const nn::ModelParams s4 = nn::make_mlp(3, {4}, 2, rng);
    nn::ema_update(t4, s4);
    for (std::size_t i = 0; i < old.head.values.size(); ++i) {
        const double lo = std::min(old.head.values[i], s4.head.values[i]);
        const double hi = std::max(old.head.values[i], s4.head.values[i]);
        CHECK(t4.params.head.values[i] >= lo - 1e-15);
        CHECK(t4.params.head.values[i] <= hi + 1e-15);
    }
}

TEST_CASE("parallel batch kernels match the serial reference bitwise") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss(0.0, 1.0);
    nn::ModelParams params = nn::make_mlp(5, {11, 7}, 4, rng);
    std::vector<Vector> xs(33, Vector(5));
    std::vector<Vector> dlogits(33, Vector(4));
    for (auto& x : xs)
        for (double& v : x) v = gauss(rng);
    for (auto& g : dlogits)
        for (double& v : g) v = gauss(rng);

    const auto fs = nn::batch_forward_serial(params, xs);
    const auto fp = nn::batch_forward(params, xs);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(fs[i].probs == fp[i].probs);

    const nn::ParamGrads gs = nn::batch_backward_serial(params, xs, dlogits);
    const nn::ParamGrads gp = nn::batch_backward(params, xs, dlogits);
    CHECK(gs.head.values == gp.head.values);
    for (std::size_t l = 0; l < gs.weight.size(); ++l) {
        CHECK(gs.weight[l].values == gp.weight[l].values);
        CHECK(gs.bias[l] == gp.bias[l]);
    }
}

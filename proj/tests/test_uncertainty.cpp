#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "glamap/random.hpp"
#include "glamap/uncertainty.hpp"

using namespace glamap;
using namespace glamap::uq;
using nn::Tensor;

namespace {

// Synthetic calibration data: confidence ~ U[0,1], correctness ~
// Bernoulli(acc_fn(conf)).
void make_calibration_data(size_t n, uint64_t seed, double (*acc_fn)(double),
                           std::vector<double>& conf, std::vector<uint8_t>& correct) {
    Rng rng(seed);
    conf.resize(n);
    correct.resize(n);
    for (size_t i = 0; i < n; ++i) {
        conf[i] = rng.uniform();
        correct[i] = rng.bernoulli(acc_fn(conf[i])) ? 1 : 0;
    }
}

double identity_acc(double c) { return c; }
double underconfident_acc(double c) { return std::min(1.0, c + 0.3); }

}  // namespace

TEST_CASE("confidence hand values and error paths") {
    const double u[2] = {0.5, 0.5};
    CHECK(confidence_value(u, 2) == doctest::Approx(0.0).epsilon(1e-12));
    const double one[2] = {1.0, 0.0};
    CHECK(confidence_value(one, 2) == doctest::Approx(1.0).epsilon(1e-12));
    const double p91[2] = {0.9, 0.1};
    CHECK(confidence_value(p91, 2) == doctest::Approx(0.53101).epsilon(1e-5));

    ProbabilityRaster bad;
    bad.probs = Tensor::from({0.6, 0.6}, {2, 1, 1});
    CHECK_THROWS_WITH_AS(confidence(bad), "confidence: unnormalized probabilities",
                         std::invalid_argument);
}

TEST_CASE("confidence invariants: permutation, uniform=0, one-hot=1") {
    Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const int c = 2 + trial % 4;
        std::vector<double> p(c);
        double z = 0;
        for (int i = 0; i < c; ++i) {
            p[i] = std::exp(rng.normal());
            z += p[i];
        }
        for (auto& v : p) v /= z;
        const double base = confidence_value(p.data(), c);
        std::vector<double> q = p;
        for (int i = c - 1; i > 0; --i) std::swap(q[i], q[rng.uniform_int(0, i)]);
        CHECK(confidence_value(q.data(), c) == doctest::Approx(base).epsilon(1e-12));
        CHECK(base >= 0.0);
        CHECK(base <= 1.0);
    }
    std::vector<double> uni(5, 0.2);
    CHECK(confidence_value(uni.data(), 5) < 1e-9);
    std::vector<double> hot = {0, 0, 1, 0};
    CHECK(confidence_value(hot.data(), 4) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fit_calibrator recovers identity on calibrated data") {
    std::vector<double> conf;
    std::vector<uint8_t> correct;
    make_calibration_data(200000, 11, identity_acc, conf, correct);
    Calibrator cal = fit_calibrator(conf, correct, 100);
    double worst = 0;
    for (double x = 0.01; x <= 0.99; x += 0.01)
        worst = std::max(worst, std::abs(cal.apply(x) - x));
    CHECK(worst < 0.02);
}

TEST_CASE("fit_calibrator learns systematic underconfidence") {
    std::vector<double> conf;
    std::vector<uint8_t> correct;
    make_calibration_data(200000, 13, underconfident_acc, conf, correct);
    Calibrator cal = fit_calibrator(conf, correct, 100);
    CHECK(cal.apply(0.5) > 0.75);
    CHECK(cal.apply(0.5) < 0.85);

    // constant-confidence input: every sample in one bin
    std::vector<double> flat(1000, 0.7);
    std::vector<uint8_t> corr(1000, 1);
    CHECK_THROWS(fit_calibrator(flat, corr, 100));
}

TEST_CASE("calibrator round trip and isotonic flag") {
    std::vector<double> conf;
    std::vector<uint8_t> correct;
    make_calibration_data(50000, 17, underconfident_acc, conf, correct);
    Calibrator cal = fit_calibrator(conf, correct, 100);

    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "glamap_cal_test.json").string();
    cal.save(path);
    Calibrator re = Calibrator::load(path);
    for (double x = 0.0; x <= 1.0; x += 0.05)
        CHECK(re.apply(x) == doctest::Approx(cal.apply(x)).epsilon(1e-12));
    fs::remove(path);

    Calibrator iso = fit_calibrator(conf, correct, 100, 0.1, 1e-3, true);
    double prev = -1;
    for (double x = 0.0; x <= 1.0; x += 0.01) {
        const double y = iso.apply(x);
        CHECK(y >= prev - 1e-12);  // monotone projection
        prev = y;
    }
}

TEST_CASE("ece hand values and bounds") {
    // accuracy == mean confidence in every bin -> 0
    std::vector<double> conf;
    std::vector<uint8_t> correct;
    for (int i = 0; i < 1000; ++i) {
        conf.push_back(i % 2 ? 0.25 : 0.75);
        correct.push_back(i % 4 < 1 ? 1 : 0);  // 25% correct at conf .25... then fixed below
    }
    // construct exactly: at conf .25 exactly 25% correct, at .75 exactly 75%
    conf.clear();
    correct.clear();
    for (int i = 0; i < 400; ++i) {
        conf.push_back(0.25);
        correct.push_back(i % 4 == 0 ? 1 : 0);
    }
    for (int i = 0; i < 400; ++i) {
        conf.push_back(0.75);
        correct.push_back(i % 4 != 0 ? 1 : 0);
    }
    CHECK(ece(conf, correct, 100) == doctest::Approx(0.0).epsilon(1e-12));

    // single bin: conf all 0.9, accuracy 0.6 -> 0.3
    std::vector<double> c9(10, 0.9);
    std::vector<uint8_t> c6 = {1, 1, 1, 1, 1, 1, 0, 0, 0, 0};
    CHECK(ece(c9, c6, 100) == doctest::Approx(0.3).epsilon(1e-12));

    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> cf;
        std::vector<uint8_t> cr;
        for (int i = 0; i < 500; ++i) {
            cf.push_back(rng.uniform());
            cr.push_back(rng.bernoulli(0.5));
        }
        const double e = ece(cf, cr, 100);
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
    }
    CHECK_THROWS(ece({}, {}, 100));
}

TEST_CASE("reliability table properties") {
    std::vector<double> conf;
    std::vector<uint8_t> correct;
    make_calibration_data(20000, 29, identity_acc, conf, correct);
    auto rows = reliability_data(conf, correct, 20);
    double frac = 0;
    for (const auto& r : rows) {
        frac += r.fraction;
        CHECK(std::abs(r.accuracy - r.mean_conf) < 0.12);  // near-diagonal +- binomial noise
    }
    CHECK(frac == doctest::Approx(1.0).epsilon(1e-12));

    // all-correct predictions: accuracy column is 1
    std::vector<uint8_t> allc(conf.size(), 1);
    for (const auto& r : reliability_data(conf, allc, 20)) CHECK(r.accuracy == 1.0);

    CHECK_THROWS(reliability_data({}, {}, 10));
}

TEST_CASE("compare_confidences: perfect, anti, independent") {
    Rng rng(31);
    std::vector<double> a(500);
    for (auto& v : a) v = rng.uniform();

    CorrelationResult same = compare_confidences(a, a, 200, 1);
    CHECK(same.r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(same.lo == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(same.hi == doctest::Approx(1.0).epsilon(1e-9));

    std::vector<double> inv(a.size());
    for (size_t i = 0; i < a.size(); ++i) inv[i] = 1.0 - a[i];
    CHECK(compare_confidences(a, inv, 100, 2).r == doctest::Approx(-1.0).epsilon(1e-12));

    std::vector<double> x(1000), y(1000);
    for (auto& v : x) v = rng.uniform();
    for (auto& v : y) v = rng.uniform();
    CorrelationResult ind = compare_confidences(x, y, 500, 3);
    CHECK(std::abs(ind.r) < 0.1);
    CHECK(ind.lo < 0.0);
    CHECK(ind.hi > 0.0);

    std::vector<double> flat(10, 0.5);
    CHECK_THROWS_WITH_AS(compare_confidences(flat, flat, 10, 4),
                         "pearson: zero-variance input", std::invalid_argument);
}

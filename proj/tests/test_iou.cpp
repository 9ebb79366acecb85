#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "glamap/iou_estimate.hpp"
#include "glamap/random.hpp"

using namespace glamap;
using namespace glamap::iou;

TEST_CASE("iou_from_counts hand values") {
    CHECK(iou_from_counts({100, 0, 0, 50}) == doctest::Approx(1.0));
    CHECK(iou_from_counts({0, 30, 30, 40}) == doctest::Approx(0.0));
    CHECK(iou_from_counts({50, 25, 25, 0}) == doctest::Approx(0.5));
    CHECK_THROWS_WITH_AS(iou_from_counts({0, 0, 0, 10}), "iou_from_counts: empty union",
                         std::invalid_argument);
}

TEST_CASE("estimate_iou hand values") {
    // A = 1 forces the numerator to 0
    CHECK(estimate_iou(1.0, 100, 900, 2) == doctest::Approx(1.0));
    // C=2, conf 0.9, n_p 100, n_n 900: 1 - 0.1*1000/190
    CHECK(estimate_iou(0.9, 100, 900, 2) == doctest::Approx(0.4736842105).epsilon(1e-8));
    // below the 1/C floor: A = 0.5 -> 1 - 0.5*200/150
    CHECK(estimate_iou(0.3, 100, 100, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-8));

    CHECK_THROWS(estimate_iou(1.2, 10, 10, 2));
    CHECK_THROWS_WITH_AS(estimate_iou(0.9, 0, 0, 2), "estimate_iou: n_p = n_n = 0",
                         std::invalid_argument);
}

TEST_CASE("estimate_iou invariants") {
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const int64_t np = rng.uniform_int(1, 1000);
        const int64_t nn = rng.uniform_int(1, 1000);
        const double conf = rng.uniform();
        const double est = estimate_iou(conf, np, nn, 2);
        CHECK(est <= 1.0 + 1e-12);
        // scale invariance
        CHECK(estimate_iou(conf, 7 * np, 7 * nn, 2) == doctest::Approx(est).epsilon(1e-9));
        // monotone non-decreasing in confidence
        const double up = std::min(1.0, conf + rng.uniform(0.0, 0.3));
        CHECK(estimate_iou(up, np, nn, 2) >= est - 1e-12);
    }
    // equals 1 iff A = 1
    CHECK(estimate_iou(1.0, 3, 9, 2) == 1.0);
    CHECK(estimate_iou(0.999, 3, 9, 2) < 1.0);
}

TEST_CASE("estimator equals exact IoU on consistency-constrained confusion tables") {
    // Whenever accuracy A >= 1/C and FN = (1-A) * n_n exactly, the relation
    // must reproduce tp/(tp+fp+fn). Brute-force all tables with
    // n_p + n_n <= 40.
    int checked = 0;
    for (int np = 1; np <= 40; ++np)
        for (int nn = 0; np + nn <= 40; ++nn)
            for (int tp = 0; tp <= np; ++tp)
                for (int fn = 0; fn <= nn; ++fn) {
                    const int fp = np - tp;
                    const int tn = nn - fn;
                    const ConfusionCounts c{tp, fp, fn, tn};
                    const double a = c.accuracy();
                    if (a < 0.5) continue;  // the max() floor would engage
                    // consistency: FN == (1-A) * n_n
                    if (std::abs(fn - (1.0 - a) * nn) > 1e-9) continue;
                    if (tp + fp + fn == 0) continue;
                    const double exact = iou_from_counts(c);
                    const double est = estimate_iou(a, np, nn, 2);
                    CHECK(std::abs(est - exact) < 1e-9);
                    ++checked;
                }
    CHECK(checked > 100);  // the constraint set is non-trivial
}

TEST_CASE("beta hook is inert at its default") {
    CHECK(estimate_iou(0.9, 100, 900, 2, 1.0) ==
          doctest::Approx(estimate_iou(0.9, 100, 900, 2)).epsilon(1e-15));
    // beta != 1 changes the FN approximation
    CHECK(estimate_iou(0.9, 100, 900, 2, 2.0) != estimate_iou(0.9, 100, 900, 2, 1.0));
}

TEST_CASE("evaluate_estimator statistics") {
    std::vector<std::pair<double, double>> exact;
    for (int i = 0; i < 20; ++i) {
        const double v = 0.3 + 0.03 * i;
        exact.push_back({v, v});
    }
    EstimatorEval e1 = evaluate_estimator(exact, 100, 1);
    CHECK(e1.rmse == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e1.r2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e1.mean_bias == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<std::pair<double, double>> shifted;
    for (const auto& [e, a] : exact) shifted.push_back({a - 0.03, a});
    EstimatorEval e2 = evaluate_estimator(shifted, 100, 2);
    CHECK(e2.mean_bias == doctest::Approx(-0.03).epsilon(1e-12));
    CHECK(e2.rmse == doctest::Approx(0.03).epsilon(1e-12));

    std::vector<std::pair<double, double>> flat = {{0.2, 0.5}, {0.4, 0.5}, {0.9, 0.5}};
    CHECK_THROWS(evaluate_estimator(flat, 10, 3));
    CHECK_THROWS(evaluate_estimator({{0.1, 0.2}}, 10, 4));
}

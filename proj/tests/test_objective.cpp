#include <doctest.h>

#include <cmath>

#include "tprn/objective.hpp"
#include "tprn/rng.hpp"

using namespace tprn;

namespace {

Vector onehot(std::size_t n, std::size_t j) {
    Vector v(n, 0.0);
    v[j] = 1.0;
    return v;
}

}  // namespace

TEST_CASE("quantization penalty: minima and hand values") {
    for (std::size_t n : {1u, 2u, 5u, 17u})
        for (std::size_t j = 0; j < n; ++j) CHECK(quantizationPenalty(onehot(n, j)) == 0.0);

    CHECK(quantizationPenalty(Vector(4, 0.0)) == 1.0);

    // direct evaluation: 2 * (0.25*0.25) + (0.5-1)^2 = 0.125 + 0.25
    CHECK(quantizationPenalty({0.5, 0.5}) == doctest::Approx(0.375).epsilon(1e-15));
}

TEST_CASE("quantization penalty: nonnegative, positive off the minima") {
    Rng rng(100);
    for (int trial = 0; trial < 2000; ++trial) {
        Vector a(1 + rng.index(12));
        for (auto& x : a) x = rng.uniform01();
        CHECK(quantizationPenalty(a) >= 0.0);
    }
    // perturbing any coordinate of a 1-hot vector strictly increases Q
    for (std::size_t n : {2u, 4u, 9u}) {
        for (std::size_t hot = 0; hot < n; ++hot) {
            for (std::size_t i = 0; i < n; ++i) {
                for (double eps : {1e-4, 1e-2, 0.05, 0.1}) {
                    Vector up = onehot(n, hot);
                    up[i] += eps;
                    CHECK(quantizationPenalty(up) > 0.0);
                    Vector down = onehot(n, hot);
                    down[i] -= eps;
                    CHECK(quantizationPenalty(down) > 0.0);
                }
            }
        }
    }
}

TEST_CASE("quantization gradient: zero at 1-hot minima, matches finite differences") {
    for (std::size_t n : {2u, 6u}) {
        for (std::size_t hot = 0; hot < n; ++hot) {
            const Vector g = quantizationPenaltyGrad(onehot(n, hot));
            for (double x : g) CHECK(x == 0.0);
        }
    }
    Rng rng(101);
    const double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        Vector a(3 + rng.index(6));
        for (auto& x : a) x = rng.uniform01();
        const Vector g = quantizationPenaltyGrad(a);
        for (std::size_t i = 0; i < a.size(); ++i) {
            Vector ap = a, am = a;
            ap[i] += h;
            am[i] -= h;
            const double fd = (quantizationPenalty(ap) - quantizationPenalty(am)) / (2.0 * h);
            CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("step penalty is the sum of both attention penalties") {
    CHECK(stepQuantizationPenalty(onehot(5, 2), onehot(3, 0)) == 0.0);
    CHECK(stepQuantizationPenalty(onehot(5, 2), Vector(3, 0.0)) == 1.0);

    Rng rng(102);
    for (int trial = 0; trial < 100; ++trial) {
        Vector aS(6), aR(4);
        for (auto& x : aS) x = rng.uniform01();
        for (auto& x : aR) x = rng.uniform01();
        CHECK(stepQuantizationPenalty(aS, aR) ==
              doctest::Approx(quantizationPenalty(aS) + quantizationPenalty(aR)).epsilon(1e-15));
    }
}

TEST_CASE("crossEntropy: uniform, saturated, reference") {
    for (std::size_t c : {2u, 3u, 10u})
        CHECK(crossEntropy(Vector(c, 1.7), 0) == doctest::Approx(std::log(c)).epsilon(1e-12));

    Vector sat(5, 0.0);
    sat[3] = 30.0;
    CHECK(crossEntropy(sat, 3) < 1e-9);
    CHECK(crossEntropy(sat, 3) >= 0.0);

    CHECK(crossEntropy({1.0, 2.0, 3.0}, 2) == doctest::Approx(0.4076059644443806).epsilon(1e-13));

    CHECK_THROWS_AS(crossEntropy({1.0, 2.0}, 2), InputError);
    CHECK_THROWS_AS(crossEntropy({1.0, 2.0}, -1), InputError);

    // stabilized against huge logits
    CHECK(std::isfinite(crossEntropy({1000.0, 999.0}, 1)));
}

TEST_CASE("crossEntropyGrad matches finite differences") {
    Rng rng(103);
    const double h = 1e-6;
    for (int trial = 0; trial < 30; ++trial) {
        Vector l(4);
        for (auto& x : l) x = rng.uniform(-3.0, 3.0);
        const int target = static_cast<int>(rng.index(4));
        const Vector g = crossEntropyGrad(l, target);
        for (std::size_t i = 0; i < l.size(); ++i) {
            Vector lp = l, lm = l;
            lp[i] += h;
            lm[i] -= h;
            const double fd = (crossEntropy(lp, target) - crossEntropy(lm, target)) / (2.0 * h);
            CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

namespace {

SequenceOutput makeTraces(const std::vector<Vector>& symbolAttns,
                          const std::vector<Vector>& roleAttns) {
    SequenceOutput so;
    for (std::size_t i = 0; i < symbolAttns.size(); ++i) {
        StepTrace t;
        t.symbolAttention = symbolAttns[i];
        t.roleAttention = roleAttns[i];
        so.tracesFwd.push_back(t);
        so.tracesBwd.push_back(t);
    }
    return so;
}

}  // namespace

TEST_CASE("totalObjective: composition and degenerate input") {
    ObjectiveConfig cfg;
    cfg.cQ = 0.0;
    const auto traces = makeTraces({{0.3, 0.4}}, {{0.9, 0.2}});
    const LossBreakdown zero = totalObjective({traces}, {1.25, 0.75}, cfg);
    CHECK(zero.crossEntropy == 1.0);
    CHECK(zero.total == zero.crossEntropy);

    cfg.cQ = 1e-3;
    const auto pure = makeTraces({{1.0, 0.0}}, {{0.0, 1.0}});
    const LossBreakdown onehotLoss = totalObjective({pure}, {0.5}, cfg);
    CHECK(onehotLoss.quantization == 0.0);
    CHECK(onehotLoss.total == onehotLoss.crossEntropy);

    CHECK_THROWS_AS(totalObjective({}, {1.0}, cfg), DegenerateInputError);
    CHECK_THROWS_AS(totalObjective({traces}, {}, cfg), DegenerateInputError);
}

TEST_CASE("totalObjective matches an independent recomputation") {
    Rng rng(104);
    std::vector<SequenceOutput> batch;
    std::vector<double> losses;
    double sumQ = 0.0;
    std::size_t steps = 0;
    for (int s = 0; s < 3; ++s) {
        std::vector<Vector> aSs, aRs;
        const std::size_t len = 1 + rng.index(4);
        for (std::size_t i = 0; i < len; ++i) {
            Vector aS(5), aR(3);
            for (auto& x : aS) x = rng.uniform01();
            for (auto& x : aR) x = rng.uniform01();
            // recompute the penalty from first principles
            auto q = [](const Vector& a) {
                double bin = 0.0, sq = 0.0;
                for (double x : a) {
                    bin += x * x * (1 - x) * (1 - x);
                    sq += x * x;
                }
                return bin + (sq - 1) * (sq - 1);
            };
            sumQ += 2.0 * (q(aS) + q(aR));  // both directions carry this step
            steps += 2;
            aSs.push_back(std::move(aS));
            aRs.push_back(std::move(aR));
        }
        batch.push_back(makeTraces(aSs, aRs));
        losses.push_back(rng.uniform01());
        losses.push_back(rng.uniform01());
    }
    ObjectiveConfig cfg;
    cfg.cQ = 1e-5;
    const LossBreakdown got = totalObjective(batch, losses, cfg);
    double meanLoss = 0.0;
    for (double l : losses) meanLoss += l;
    meanLoss /= static_cast<double>(losses.size());
    CHECK(got.crossEntropy == doctest::Approx(meanLoss).epsilon(1e-12));
    CHECK(got.quantization == doctest::Approx(sumQ / static_cast<double>(steps)).epsilon(1e-12));
    CHECK(got.total == doctest::Approx(meanLoss + cfg.cQ * got.quantization).epsilon(1e-12));

    // sum aggregation honors the config
    cfg.qAggregation = QAggregation::Sum;
    const LossBreakdown sum = totalObjective(batch, losses, cfg);
    CHECK(sum.quantization == doctest::Approx(sumQ).epsilon(1e-12));
}

TEST_CASE("totalObjective is linear in cQ") {
    // exact case: zero task loss and a power-of-two weight
    const auto traces = makeTraces({{0.3, 0.8, 0.1}}, {{0.6, 0.6}});
    ObjectiveConfig c1;
    c1.cQ = 0.25;
    ObjectiveConfig c2;
    c2.cQ = 0.5;
    const LossBreakdown l1 = totalObjective({traces}, {0.0}, c1);
    const LossBreakdown l2 = totalObjective({traces}, {0.0}, c2);
    CHECK(l2.total - l1.total == c1.cQ * l1.quantization);

    // general case within floating tolerance
    ObjectiveConfig g1;
    g1.cQ = 1e-5;
    ObjectiveConfig g2;
    g2.cQ = 2e-5;
    const LossBreakdown m1 = totalObjective({traces}, {1.234}, g1);
    const LossBreakdown m2 = totalObjective({traces}, {1.234}, g2);
    CHECK(m2.total - m1.total ==
          doctest::Approx(g1.cQ * m1.quantization).epsilon(1e-10));
}

TEST_CASE("onehotness: pure cases and brute-force aggregation") {
    std::vector<StepTrace> pure;
    for (int i = 0; i < 4; ++i) {
        StepTrace t;
        t.symbolAttention = onehot(6, static_cast<std::size_t>(i));
        t.roleAttention = onehot(3, static_cast<std::size_t>(i % 3));
        pure.push_back(t);
    }
    const Onehotness p = onehotness(pure);
    CHECK(p.meanMaxComponent == 1.0);
    CHECK(p.meanQ == 0.0);

    std::vector<StepTrace> uniform(3);
    for (auto& t : uniform) {
        t.symbolAttention = Vector(8, 1.0 / 8.0);
        t.roleAttention = Vector(4, 1.0 / 4.0);
    }
    const Onehotness u = onehotness(uniform);
    CHECK(u.meanMaxSymbol == doctest::Approx(1.0 / 8.0).epsilon(1e-15));
    CHECK(u.meanMaxRole == doctest::Approx(1.0 / 4.0).epsilon(1e-15));

    // mixed synthetic set vs direct aggregation
    Rng rng(105);
    std::vector<StepTrace> mixed;
    double sumMaxS = 0.0, sumMaxR = 0.0, sumQ = 0.0;
    for (int i = 0; i < 25; ++i) {
        StepTrace t;
        t.symbolAttention = Vector(7);
        t.roleAttention = Vector(5);
        for (auto& x : t.symbolAttention) x = rng.uniform01();
        for (auto& x : t.roleAttention) x = rng.uniform01();
        double ms = 0.0, mr = 0.0;
        for (double x : t.symbolAttention) ms = std::max(ms, x);
        for (double x : t.roleAttention) mr = std::max(mr, x);
        sumMaxS += ms;
        sumMaxR += mr;
        sumQ += quantizationPenalty(t.symbolAttention) + quantizationPenalty(t.roleAttention);
        mixed.push_back(std::move(t));
    }
    const Onehotness m = onehotness(mixed);
    CHECK(m.meanMaxSymbol == doctest::Approx(sumMaxS / 25.0).epsilon(1e-12));
    CHECK(m.meanMaxRole == doctest::Approx(sumMaxR / 25.0).epsilon(1e-12));
    CHECK(m.meanMaxComponent == doctest::Approx((sumMaxS + sumMaxR) / 50.0).epsilon(1e-12));
    CHECK(m.meanQ == doctest::Approx(sumQ / 25.0).epsilon(1e-12));

    CHECK_THROWS_AS(onehotness({}), DegenerateInputError);
}

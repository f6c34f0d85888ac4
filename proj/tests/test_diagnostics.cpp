#include <doctest.h>

#include <cmath>

#include "ghostgrad/diagnostics.hpp"
#include "ghostgrad/harness.hpp"
#include "ghostgrad/landscapes.hpp"

using namespace ghostgrad;

namespace {

// Cyclic Jacobi eigenvalue sweep; the brute-force spectrum oracle for small
// symmetric matrices, independent of the power-iteration path it checks.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-18) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
    return eig;
}

}  // namespace

TEST_CASE("hvp: exact on quadratics, quartic closed form") {
    const SyntheticLandscape quad = SyntheticLandscape::quadratic({1.0, 3.0});
    const GradFn grad = [&quad](std::span<const double> w) { return quad.grad(w); };

    const std::vector<double> w = {0.4, -0.9};
    const std::vector<double> v1 = {1.0, 0.0};
    const std::vector<double> h1 = hvp(grad, w, v1);
    CHECK(h1[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(h1[1] == doctest::Approx(0.0).epsilon(1e-10));

    const std::vector<double> v2 = {0.0, 2.0};
    const std::vector<double> h2 = hvp(grad, w, v2);
    CHECK(h2[0] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(h2[1] == doctest::Approx(6.0).epsilon(1e-10));

    // f = w^4 at w=2: H = 12 w^2 = 48.
    const GradFn quartic = [](std::span<const double> x) {
        return std::vector<double>{4.0 * x[0] * x[0] * x[0]};
    };
    const std::vector<double> w2 = {2.0};
    const std::vector<double> vv = {1.0};
    CHECK(hvp(quartic, w2, vv)[0] == doctest::Approx(48.0).epsilon(1e-3));

    const std::vector<double> zero = {0.0};
    CHECK_THROWS_AS(hvp(quartic, w2, zero), ContractError);
}

TEST_CASE("spectral_norm_shifted closed forms") {
    SUBCASE("quadratic lambda=2, eta=0.1 -> 0.8") {
        const SyntheticLandscape quad = SyntheticLandscape::quadratic({2.0});
        SpectralProbe p;
        p.grad = [&quad](std::span<const double> w) { return quad.grad(w); };
        const std::vector<double> w = {0.0};
        const SpectralResult r = spectral_norm_shifted(p, w, 0.1);
        CHECK(r.converged);
        CHECK(r.value == doctest::Approx(0.8).epsilon(1e-9));
    }
    SUBCASE("saddle eta=0.1 -> 1.1 (largest absolute eigenvalue)") {
        const SyntheticLandscape sad = SyntheticLandscape::saddle();
        SpectralProbe p;
        p.grad = [&sad](std::span<const double> w) { return sad.grad(w); };
        const std::vector<double> w = {0.0, 0.0};
        CHECK(spectral_norm_shifted(p, w, 0.1).value == doctest::Approx(1.1).epsilon(1e-6));
    }
    SUBCASE("eta=0 -> exactly 1") {
        const SyntheticLandscape quad = SyntheticLandscape::quadratic({5.0, 1.0, 2.0});
        SpectralProbe p;
        p.grad = [&quad](std::span<const double> w) { return quad.grad(w); };
        const std::vector<double> w = {1.0, 1.0, 1.0};
        CHECK(spectral_norm_shifted(p, w, 0.0).value == 1.0);
    }
}

TEST_CASE("spectral_norm_shifted matches dense eigendecomposition on random 10x10 Hessians") {
    const std::size_t n = 10;
    for (std::uint64_t trial = 0; trial < 12; ++trial) {
        CounterRng rng(900 + trial, CounterRng::kNoise);
        std::vector<double> h(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const double v = rng.next_uniform(-2.0, 2.0);
                h[i * n + j] = v;
                h[j * n + i] = v;
            }
        const double eta = 0.1;

        SpectralProbe p;
        p.method = SpectralProbe::HvpMethod::ExactQuadratic;
        p.seed = trial;
        p.tol = 1e-12;
        p.max_iters = 10000;
        p.hess_apply = [&h, n](std::span<const double>, std::span<const double> v) {
            std::vector<double> out(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) out[i] += h[i * n + j] * v[j];
            return out;
        };
        const std::vector<double> w(n, 0.0);
        const double got = spectral_norm_shifted(p, w, eta).value;

        std::vector<double> shifted(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                shifted[i * n + j] = (i == j ? 1.0 : 0.0) - eta * h[i * n + j];
        double expect = 0.0;
        for (const double ev : jacobi_eigenvalues(shifted, n)) expect = std::max(expect, std::abs(ev));
        CHECK(got == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("lyapunov_running closed forms on pinned chains") {
    ErgodicAccumulator acc;
    SUBCASE("stationary at the quadratic minimum: log 0.8 for every N") {
        const SyntheticLandscape quad = SyntheticLandscape::quadratic({2.0});
        SpectralProbe p;
        p.grad = [&quad](std::span<const double> w) { return quad.grad(w); };
        const std::vector<double> w = {0.0};
        for (int i = 0; i < 5; ++i) {
            TrajectoryRecord rec;
            rec.lyap_summand = std::log(spectral_norm_shifted(p, w, 0.1).value);
            acc.record(rec);
            CHECK(lyapunov_running(acc) == doctest::Approx(-0.223144).epsilon(1e-6));
        }
    }
    SUBCASE("pinned at the saddle: +log 1.1") {
        const SyntheticLandscape sad = SyntheticLandscape::saddle();
        SpectralProbe p;
        p.grad = [&sad](std::span<const double> w) { return sad.grad(w); };
        const std::vector<double> w = {0.0, 0.0};
        TrajectoryRecord rec;
        rec.lyap_summand = std::log(spectral_norm_shifted(p, w, 0.1).value);
        acc.record(rec);
        CHECK(lyapunov_running(acc) == doctest::Approx(0.095310).epsilon(1e-5));
    }
    SUBCASE("eta -> 0 gives 0") {
        const SyntheticLandscape quad = SyntheticLandscape::quadratic({2.0});
        SpectralProbe p;
        p.grad = [&quad](std::span<const double> w) { return quad.grad(w); };
        const std::vector<double> w = {0.3};
        TrajectoryRecord rec;
        rec.lyap_summand = std::log(spectral_norm_shifted(p, w, 0.0).value);
        acc.record(rec);
        CHECK(lyapunov_running(acc) == 0.0);
    }
    SUBCASE("no probes recorded is a contract error") {
        CHECK_THROWS_AS(lyapunov_running(acc), ContractError);
    }
}

TEST_CASE("gamma_hat stays negative for every N on a contracting quadratic chain") {
    const SyntheticLandscape quad = SyntheticLandscape::quadratic({2.0, 0.5, 1.1});
    LandscapeObjective obj(quad, 0.2);
    SpectralProbe p;
    p.grad = [&quad](std::span<const double> w) { return quad.grad(w); };

    ParamVector params;
    ParamSegment seg;
    seg.name = "w";
    seg.shape = {3};
    seg.size = 3;
    params.segments = {seg};
    params.values = {1.0, -1.0, 0.5};
    SgdState st = SgdState::make(std::move(params), 0.4, 5);  // eta < 2/2

    LyapunovProbe probe;
    probe.cadence = 1;
    probe.log_norm = [&p](std::span<const double> w) {
        return std::log(spectral_norm_shifted(p, w, 0.4).value);
    };
    std::vector<TrajectoryRecord> recs;
    run_chain(st, obj, 300, {}, &recs, &probe);

    ErgodicAccumulator acc;
    for (const TrajectoryRecord& rec : recs) {
        acc.record(rec);
        CHECK(lyapunov_running(acc) < 0.0);
    }
    CHECK(acc.lyap_count == 300);
}

TEST_CASE("ergodic_means: constants and the AR(1) stationary oracle") {
    SUBCASE("constant observable averages to itself") {
        ErgodicAccumulator acc;
        for (int i = 0; i < 7; ++i) {
            TrajectoryRecord rec;
            rec.f_orig = 3.25;
            acc.record(rec);
        }
        CHECK(ergodic_means(acc).f_orig == doctest::Approx(3.25).epsilon(1e-15));
    }
    SUBCASE("(1,2,3) averages to 2") {
        ErgodicAccumulator acc;
        for (const double f : {1.0, 2.0, 3.0}) {
            TrajectoryRecord rec;
            rec.f_orig = f;
            acc.record(rec);
        }
        CHECK(ergodic_means(acc).f_orig == doctest::Approx(2.0).epsilon(1e-15));
    }
    SUBCASE("AR(1) chain long-run mean of f within 5% of eta^2 sigma^2 / ...") {
        // w_{t+1} = (1 - eta) w_t - eta xi_t with lambda = 1, sigma = 1.
        LandscapeObjective obj(SyntheticLandscape::quadratic({1.0}), 1.0);
        ParamVector params;
        ParamSegment seg;
        seg.name = "w";
        seg.shape = {1};
        seg.size = 1;
        params.segments = {seg};
        params.values = {0.0};
        SgdState st = SgdState::make(std::move(params), 0.1, 2718);
        ErgodicAccumulator acc;
        std::vector<TrajectoryRecord> recs;
        recs.reserve(1000000);
        run_chain(st, obj, 1000000, {}, &recs);
        for (const TrajectoryRecord& rec : recs) acc.record(rec);
        const double expect = 0.5 * 0.01 / (1.0 - 0.81);  // 0.026316
        CHECK(ergodic_means(acc).f_orig == doctest::Approx(expect).epsilon(0.05));
    }
}

TEST_CASE("measure_stability: identical halves, disjoint halves, AR(1) chain") {
    SUBCASE("identical halves give zero distance") {
        MeasureSketch sketch(2, 1);
        const std::vector<double> pattern = {0.3, -1.0};
        for (int rep = 0; rep < 2; ++rep)
            for (int i = 0; i < 1500; ++i) {
                const std::vector<double> w = {pattern[0] + 0.001 * (i % 7),
                                               pattern[1] - 0.002 * (i % 5)};
                sketch.record(w);
            }
        CHECK(sketch.tv_distance() == doctest::Approx(0.0));
    }
    SUBCASE("disjoint supports give distance one") {
        MeasureSketch sketch(2, 1);
        for (int i = 0; i < 1500; ++i) sketch.record(std::vector<double>{5.0, 5.0});
        for (int i = 0; i < 1500; ++i) sketch.record(std::vector<double>{-5.0, -5.0});
        CHECK(sketch.tv_distance() == doctest::Approx(1.0));
    }
    SUBCASE("too few steps is a contract error") {
        MeasureSketch sketch(2, 1);
        sketch.record(std::vector<double>{0.0, 0.0});
        CHECK_THROWS_AS(sketch.tv_distance(), ContractError);
    }
    SUBCASE("stationary AR(1) halves agree within 0.05 at N=1e5") {
        LandscapeObjective obj(SyntheticLandscape::quadratic({1.0}), 1.0);
        ParamVector params;
        ParamSegment seg;
        seg.name = "w";
        seg.shape = {1};
        seg.size = 1;
        params.segments = {seg};
        params.values = {0.0};
        SgdState st = SgdState::make(std::move(params), 0.1, 31415);
        MeasureSketch sketch(1, 31415);
        const Observer obs = [&sketch](const TrajectoryRecord&, std::span<const double> w) {
            sketch.record(w);
        };
        std::vector<TrajectoryRecord> recs;
        run_chain(st, obj, 100000, std::span<const Observer>(&obs, 1), &recs);
        CHECK(sketch.tv_distance() <= 0.05);
    }
}

TEST_CASE("first_peak: stated rule, absences, plateaus, affine invariance") {
    const std::vector<double> a = {2.0, 1.5, 1.6, 1.8, 1.4, 1.2};
    CHECK(first_peak(a) == std::optional<std::size_t>(3));

    const std::vector<double> down = {5.0, 4.0, 3.0, 2.0};
    CHECK(first_peak(down) == std::nullopt);

    const std::vector<double> plateau = {1.0, 2.0, 2.0, 1.0};
    CHECK(first_peak(plateau) == std::optional<std::size_t>(1));

    // Positive affine transforms leave the answer unchanged.
    std::vector<double> scaled(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) scaled[i] = 7.0 * a[i] + 11.0;
    CHECK(first_peak(scaled) == first_peak(a));

    // Smoothing window 3 on a spiky series.
    const std::vector<double> spiky = {3.0, 1.0, 4.0, 1.0, 5.0, 1.0, 0.5, 0.25};
    const std::vector<double> smooth = moving_average(spiky, 3);
    CHECK(smooth[1] == doctest::Approx((3.0 + 1.0 + 4.0) / 3.0));
    CHECK(first_peak(spiky, 3) == first_peak(smooth, 1));

    CHECK_THROWS_AS(first_peak(std::vector<double>{1.0, 2.0}), ContractError);
}

#include <doctest.h>

#include <cmath>

#include "ghostgrad/ghost_head.hpp"
#include "ghostgrad/rng.hpp"

using namespace ghostgrad;

namespace {

GhostHeadConfig random_head(int c, int e, int s, std::uint64_t seed,
                            Activation act = Activation::Identity) {
    GhostHeadConfig cfg;
    cfg.c = c;
    cfg.e = e;
    cfg.s = s;
    cfg.activation = act;
    CounterRng rng(seed, CounterRng::kInit);
    cfg.u.resize(static_cast<std::size_t>(s) * static_cast<std::size_t>(c + e));
    cfg.b.resize(static_cast<std::size_t>(c + e));
    for (double& v : cfg.u) v = rng.next_uniform(-1.0, 1.0);
    for (double& v : cfg.b) v = rng.next_uniform(-1.0, 1.0);
    return cfg;
}

}  // namespace

TEST_CASE("head_forward: zero head, identity head, matmul oracle") {
    GhostHeadConfig zero;
    zero.c = 2;
    zero.e = 1;
    zero.s = 3;
    zero.u.assign(9, 0.0);
    zero.b.assign(3, 0.0);
    const std::vector<double> feats = {0.5, -1.0, 2.0};
    for (const double z : head_forward(feats, 1, zero)) CHECK(z == 0.0);

    GhostHeadConfig ident;
    ident.c = 2;
    ident.e = 1;
    ident.s = 3;
    ident.u = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    ident.b.assign(3, 0.0);
    const std::vector<double> z = head_forward(feats, 1, ident);
    CHECK(z == feats);

    // Random head against an explicit per-logit dot product.
    const GhostHeadConfig cfg = random_head(3, 2, 4, 99);
    const std::vector<double> f2 = {0.1, -0.7, 1.3, 0.4, 0.0, 2.0, -1.1, 0.6};
    const std::vector<double> out = head_forward(f2, 2, cfg);
    for (std::size_t r = 0; r < 2; ++r)
        for (int i = 0; i < 5; ++i) {
            double acc = cfg.b[static_cast<std::size_t>(i)];
            for (int j = 0; j < 4; ++j)
                acc += f2[r * 4 + static_cast<std::size_t>(j)] *
                       cfg.u[static_cast<std::size_t>(j) * 5 + static_cast<std::size_t>(i)];
            CHECK(out[r * 5 + static_cast<std::size_t>(i)] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("head_forward rejects feature width mismatch") {
    const GhostHeadConfig cfg = random_head(2, 1, 3, 1);
    const std::vector<double> feats = {1.0, 2.0};  // width 2, head expects 3
    CHECK_THROWS_AS(head_forward(feats, 1, cfg), DimensionError);
}

TEST_CASE("ghost_softmax_ce: symmetric logits give ln 3 / ln 2 / ln 1.5") {
    const std::vector<double> z = {0.0, 0.0, 0.0};
    const std::vector<int> label = {0};
    const LossBreakdown b = ghost_softmax_ce(z, 1, label, 2, 1);
    CHECK(b.l_ext == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(b.l_orig == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(b.l_ghost == doctest::Approx(std::log(1.5)).epsilon(1e-12));
}

TEST_CASE("ghost_softmax_ce: e=0 reduces to plain cross-entropy") {
    const std::vector<double> z = {1.0, 2.0};
    const std::vector<int> label = {1};
    const LossBreakdown b = ghost_softmax_ce(z, 1, label, 2, 0);
    const double expect = std::log1p(std::exp(-1.0));  // -log(e^2/(e^1+e^2))
    CHECK(b.l_ext == doctest::Approx(expect).epsilon(1e-12));
    CHECK(b.l_orig == doctest::Approx(expect).epsilon(1e-12));
    CHECK(b.l_ghost == 0.0);
}

TEST_CASE("ghost_softmax_ce: collapsed ghosts leave l_ext equal to l_orig") {
    const std::vector<double> z = {0.7, -0.2, 1.1, -1e6, -1e6};
    const std::vector<int> label = {2};
    const LossBreakdown b = ghost_softmax_ce(z, 1, label, 3, 2);
    CHECK(std::abs(b.l_ext - b.l_orig) <= 1e-12);
    CHECK(b.l_ghost <= 1e-12);
}

TEST_CASE("ghost_softmax_ce rejects out-of-range labels") {
    const std::vector<double> z = {0.0, 0.0, 0.0};
    const std::vector<int> ghost_label = {2};  // index of the ghost class
    CHECK_THROWS_AS(ghost_softmax_ce(z, 1, ghost_label, 2, 1), ContractError);
}

TEST_CASE("decomposition identity and non-negativity over random logits with extremes") {
    CounterRng rng(42, CounterRng::kNoise);
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int c = 1 + static_cast<int>(rng.next_below(5));
        const int e = static_cast<int>(rng.next_below(4));
        std::vector<double> z(static_cast<std::size_t>(c + e));
        for (double& v : z) v = rng.next_uniform(-50.0, 50.0);
        const std::vector<int> label = {static_cast<int>(rng.next_below(static_cast<std::uint64_t>(c)))};
        const LossBreakdown b = ghost_softmax_ce(z, 1, label, c, e);
        worst = std::max(worst, std::abs(b.l_ext - b.l_orig - b.l_ghost));
        REQUIRE(b.l_ghost >= 0.0);
        if (e == 0) REQUIRE(b.l_ghost == 0.0);
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("l_ghost is independent of the class label") {
    CounterRng rng(7, CounterRng::kNoise);
    std::vector<double> z(6);
    for (double& v : z) v = rng.next_uniform(-4.0, 4.0);
    double first = -1.0;
    for (int y = 0; y < 4; ++y) {
        const std::vector<int> label = {y};
        const double lg = ghost_softmax_ce(z, 1, label, 4, 2).l_ghost;
        if (y == 0) first = lg;
        else CHECK(lg == first);
    }
}

TEST_CASE("monotone collapse: lowering ghost logits strictly lowers l_ghost") {
    const std::vector<int> label = {0};
    std::vector<double> z = {0.3, -0.5, 0.8, 0.1};
    double prev = ghost_softmax_ce(z, 1, label, 2, 2).l_ghost;
    for (const double delta : {0.5, 1.0, 3.0, 10.0}) {
        std::vector<double> zd = z;
        zd[2] -= delta;
        zd[3] -= delta;
        const double cur = ghost_softmax_ce(zd, 1, label, 2, 2).l_ghost;
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("gradient: symmetric case and ghost-coordinate sign") {
    const std::vector<double> z = {0.0, 0.0, 0.0};
    const std::vector<int> label = {0};
    const std::vector<double> g = ghost_softmax_ce_grad(z, 1, label, 2, 1);
    CHECK(g[0] == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(g[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    CounterRng rng(13, CounterRng::kNoise);
    for (int trial = 0; trial < 200; ++trial) {
        const int c = 1 + static_cast<int>(rng.next_below(5));
        const int e = 1 + static_cast<int>(rng.next_below(3));
        std::vector<double> zz(static_cast<std::size_t>(c + e));
        for (double& v : zz) v = rng.next_uniform(-5.0, 5.0);
        const std::vector<int> lab = {static_cast<int>(rng.next_below(static_cast<std::uint64_t>(c)))};
        const std::vector<double> gg = ghost_softmax_ce_grad(zz, 1, lab, c, e);
        for (int i = c; i < c + e; ++i) CHECK(gg[static_cast<std::size_t>(i)] >= 0.0);
    }
}

TEST_CASE("three-way gradient agreement: analytic, literal, finite differences") {
    CounterRng rng(21, CounterRng::kNoise);
    double worst_forms = 0.0, worst_fd = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int c = 1 + static_cast<int>(rng.next_below(5));
        const int e = static_cast<int>(rng.next_below(4));
        const std::size_t batch = 1 + rng.next_below(3);
        const std::size_t width = static_cast<std::size_t>(c + e);
        std::vector<double> z(batch * width);
        for (double& v : z) v = rng.next_uniform(-4.0, 4.0);
        std::vector<int> labels(batch);
        for (int& l : labels) l = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(c)));

        worst_forms = std::max(worst_forms, grad_forms_disagreement(z, batch, labels, c, e));

        const std::vector<double> g = ghost_softmax_ce_grad(z, batch, labels, c, e);
        const double h = 1e-6;
        for (std::size_t i = 0; i < z.size(); ++i) {
            std::vector<double> zp = z, zm = z;
            zp[i] += h;
            zm[i] -= h;
            const double fd = (ghost_softmax_ce(zp, batch, labels, c, e).l_ext -
                               ghost_softmax_ce(zm, batch, labels, c, e).l_ext) /
                              (2.0 * h);
            worst_fd = std::max(worst_fd, std::abs(fd - g[i]) /
                                              std::max({1e-9, std::abs(fd), std::abs(g[i])}));
        }
    }
    CHECK(worst_forms <= 1e-6);
    CHECK(worst_fd <= 1e-6);
}

TEST_CASE("embed_original: identity, frozen collapse, zero-gamma formula") {
    const GhostHeadConfig orig = random_head(4, 0, 3, 5);
    const std::vector<double> feats = {0.2, -1.4, 0.9};
    const std::vector<int> label = {1};

    SUBCASE("e_new = 0 keeps the head identical") {
        const GhostHeadConfig same = embed_original(orig, 0, GammaInit::Zeros);
        CHECK(same.u == orig.u);
        CHECK(same.b == orig.b);
        const std::vector<double> z = head_forward(feats, 1, same);
        const LossBreakdown b = ghost_softmax_ce(z, 1, label, 4, 0);
        CHECK(b.l_ext == b.l_orig);
    }

    SUBCASE("ghost biases at -30 reproduce the original loss to 1e-12") {
        const GhostHeadConfig ext = embed_original(orig, 2, GammaInit::FrozenAtNegative);
        const std::vector<double> z0 = head_forward(feats, 1, orig);
        const std::vector<double> z1 = head_forward(feats, 1, ext);
        const LossBreakdown b0 = ghost_softmax_ce(z0, 1, label, 4, 0);
        const LossBreakdown b1 = ghost_softmax_ce(z1, 1, label, 4, 2);
        CHECK(std::abs(b1.l_ext - b0.l_orig) <= 1e-12);
    }

    SUBCASE("zero-initialized ghosts add exactly log(1 + e / sum_real)") {
        const GhostHeadConfig ext = embed_original(orig, 2, GammaInit::Zeros);
        const std::vector<double> z0 = head_forward(feats, 1, orig);
        const std::vector<double> z1 = head_forward(feats, 1, ext);
        double sum_real = 0.0;
        for (int i = 0; i < 4; ++i) sum_real += std::exp(z0[static_cast<std::size_t>(i)]);
        const double expect = std::log(1.0 + 2.0 / sum_real);
        const LossBreakdown b1 = ghost_softmax_ce(z1, 1, label, 4, 2);
        CHECK(b1.l_ghost == doctest::Approx(expect).epsilon(1e-12));
        CHECK(b1.l_ghost > 0.0);
    }
}

TEST_CASE("embedding dominance: extended model reproduces any e=0 output") {
    CounterRng rng(77, CounterRng::kNoise);
    for (int trial = 0; trial < 20; ++trial) {
        const GhostHeadConfig orig = random_head(3, 0, 4, 1000 + static_cast<std::uint64_t>(trial));
        const GhostHeadConfig ext = embed_original(orig, 2, GammaInit::FrozenAtNegative);
        std::vector<double> feats(4);
        for (double& f : feats) f = rng.next_uniform(-2.0, 2.0);
        const std::vector<double> z0 = head_forward(feats, 1, orig);
        const std::vector<double> z1 = head_forward(feats, 1, ext);
        // Real-class probabilities of the extended model vs the original.
        double s0 = 0.0, s1 = 0.0;
        for (int i = 0; i < 3; ++i) s0 += std::exp(z0[static_cast<std::size_t>(i)]);
        for (int i = 0; i < 5; ++i) s1 += std::exp(z1[static_cast<std::size_t>(i)]);
        for (int i = 0; i < 3; ++i) {
            const double y0 = std::exp(z0[static_cast<std::size_t>(i)]) / s0;
            const double y1 = std::exp(z1[static_cast<std::size_t>(i)]) / s1;
            CHECK(std::abs(y0 - y1) <= 1e-9);
        }
    }
}

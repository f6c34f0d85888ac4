// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 7 runs the 5-run smoke study and is the slow step; set
// GHOSTGRAD_DATA_DIR to a directory of MNIST IDX files to run it on the real
// data instead of the synthetic stand-in.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "ghostgrad/harness.hpp"
#include "ghostgrad/runtime.hpp"

using namespace ghostgrad;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int criterion;
    std::string name;
    bool pass;
    std::string detail;
};

std::vector<Outcome> g_outcomes;

void record(int criterion, const std::string& name, bool pass, const std::string& detail) {
    g_outcomes.push_back({criterion, name, pass, detail});
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << criterion << ": " << name << " ("
              << detail << ")" << std::endl;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ParamVector vector_params(std::vector<double> values) {
    ParamVector p;
    ParamSegment seg;
    seg.name = "w";
    seg.shape = {values.size()};
    seg.size = values.size();
    p.segments = {seg};
    p.values = std::move(values);
    return p;
}

// --------------------------------------------------------------------------

void criterion_1_gradient_correctness() {
    CounterRng rng(101, CounterRng::kNoise);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int c = 1 + static_cast<int>(rng.next_below(5));
        const int e = static_cast<int>(rng.next_below(4));
        const std::size_t width = static_cast<std::size_t>(c + e);
        const std::size_t batch = 1 + rng.next_below(4);
        std::vector<double> z(batch * width);
        for (double& v : z) v = rng.next_uniform(-6.0, 6.0);
        std::vector<int> labels(batch);
        for (int& l : labels) l = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(c)));

        worst = std::max(worst, grad_forms_disagreement(z, batch, labels, c, e));
        const std::vector<double> g = ghost_softmax_ce_grad(z, batch, labels, c, e);
        const double h = 1e-6;
        for (std::size_t i = 0; i < z.size(); ++i) {
            std::vector<double> zp = z, zm = z;
            zp[i] += h;
            zm[i] -= h;
            const double fd = (ghost_softmax_ce(zp, batch, labels, c, e).l_ext -
                               ghost_softmax_ce(zm, batch, labels, c, e).l_ext) /
                              (2.0 * h);
            worst = std::max(worst,
                             std::abs(fd - g[i]) / std::max({1e-9, std::abs(fd), std::abs(g[i])}));
        }
    }
    record(1, "three-way gradient agreement on 100 random heads", worst <= 1e-6,
           "worst rel err " + fmt(worst) + " <= 1e-6");
}

void criterion_2_loss_decomposition() {
    CounterRng rng(202, CounterRng::kNoise);
    double worst = 0.0;
    bool nonneg = true;
    for (int trial = 0; trial < 10000; ++trial) {
        const int c = 1 + static_cast<int>(rng.next_below(5));
        const int e = static_cast<int>(rng.next_below(4));
        std::vector<double> z(static_cast<std::size_t>(c + e));
        for (double& v : z) v = rng.next_uniform(-50.0, 50.0);
        if (trial % 10 == 0)
            for (double& v : z) v = v > 0 ? 50.0 : -50.0;  // exercise the extremes exactly
        const std::vector<int> label = {static_cast<int>(rng.next_below(static_cast<std::uint64_t>(c)))};
        const LossBreakdown b = ghost_softmax_ce(z, 1, label, c, e);
        worst = std::max(worst, std::abs(b.l_ext - b.l_orig - b.l_ghost));
        nonneg = nonneg && b.l_ghost >= 0.0;
    }
    record(2, "loss decomposition over 10^4 logit vectors with +-50 extremes",
           worst <= 1e-12 && nonneg, "worst residual " + fmt(worst) + " <= 1e-12, l_ghost >= 0");
}

void criterion_3_collapse() {
    ModelSpec spec;
    spec.kind = ModelSpec::Kind::Mlp;
    spec.hidden = {12};
    spec.input_rows = 4;
    spec.input_cols = 4;
    spec.classes = 5;
    spec.init_seed = 33;

    CounterRng rng(303, CounterRng::kNoise);
    double worst_gap = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> imgs(6 * 16);
        for (double& v : imgs) v = rng.next_double();
        std::vector<int> labels(6);
        for (int& l : labels) l = static_cast<int>(rng.next_below(5));
        const BatchView batch{imgs, labels, 6, 1, 4, 4};

        spec.ghosts = 3;
        spec.gamma_init = GammaInit::FrozenAtNegative;  // ghost logits exactly -30
        spec.init_seed = 33 + static_cast<std::uint64_t>(trial);
        const Model frozen = Model::build(spec);
        worst_gap = std::max(worst_gap,
                             gradient_coincidence_gap(frozen, frozen.init_params(), batch));
    }

    spec.ghosts = 0;
    const Model plain = Model::build(spec);
    std::vector<double> imgs(4 * 16);
    for (double& v : imgs) v = rng.next_double();
    const std::vector<int> labels = {0, 1, 2, 3};
    const BatchView batch{imgs, labels, 4, 1, 4, 4};
    const double zero_gap = gradient_coincidence_gap(plain, plain.init_params(), batch);

    record(3, "gradient coincidence collapse", worst_gap <= 1e-10 && zero_gap == 0.0,
           "gap " + fmt(worst_gap) + " <= 1e-10 at ghost logits -30; e=0 gap " + fmt(zero_gap) +
               " == 0");
}

void criterion_4_lyapunov_closed_forms() {
    bool ok = true;
    std::string detail;

    // Stationary chain at the quadratic minimum.
    {
        const SyntheticLandscape quad = SyntheticLandscape::quadratic({2.0});
        SpectralProbe p;
        p.grad = [&quad](std::span<const double> w) { return quad.grad(w); };
        ErgodicAccumulator acc;
        const std::vector<double> w = {0.0};
        for (int i = 0; i < 10; ++i) {
            TrajectoryRecord rec;
            rec.lyap_summand = std::log(spectral_norm_shifted(p, w, 0.1).value);
            acc.record(rec);
        }
        const double got = lyapunov_running(acc);
        ok = ok && std::abs(got - (-0.223144)) <= 1e-6;
        detail += "quadratic " + fmt(got);
    }
    // Pinned at the saddle.
    {
        const SyntheticLandscape sad = SyntheticLandscape::saddle();
        SpectralProbe p;
        p.grad = [&sad](std::span<const double> w) { return sad.grad(w); };
        ErgodicAccumulator acc;
        const std::vector<double> w = {0.0, 0.0};
        TrajectoryRecord rec;
        rec.lyap_summand = std::log(spectral_norm_shifted(p, w, 0.1).value);
        acc.record(rec);
        const double got = lyapunov_running(acc);
        ok = ok && std::abs(got - 0.095310) <= 1e-6;
        detail += ", saddle " + fmt(got);
    }
    // Random 10-D quadratics against a dense Jacobi eigensolver.
    {
        const std::size_t n = 10;
        double worst = 0.0;
        for (std::uint64_t trial = 0; trial < 10; ++trial) {
            CounterRng rng(404 + trial, CounterRng::kNoise);
            std::vector<double> h(n * n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j <= i; ++j) {
                    const double v = rng.next_uniform(-2.0, 2.0);
                    h[i * n + j] = v;
                    h[j * n + i] = v;
                }
            SpectralProbe p;
            p.method = SpectralProbe::HvpMethod::ExactQuadratic;
            p.seed = trial;
            p.tol = 1e-12;
            p.max_iters = 20000;
            p.hess_apply = [&h, n](std::span<const double>, std::span<const double> v) {
                std::vector<double> out(n, 0.0);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) out[i] += h[i * n + j] * v[j];
                return out;
            };
            const std::vector<double> w(n, 0.0);
            const double got = spectral_norm_shifted(p, w, 0.1).value;

            // Jacobi sweep oracle.
            std::vector<double> a(n * n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    a[i * n + j] = (i == j ? 1.0 : 0.0) - 0.1 * h[i * n + j];
            for (int sweep = 0; sweep < 60; ++sweep)
                for (std::size_t pp = 0; pp < n; ++pp)
                    for (std::size_t q = pp + 1; q < n; ++q) {
                        const double apq = a[pp * n + q];
                        if (std::abs(apq) < 1e-16) continue;
                        const double theta = (a[q * n + q] - a[pp * n + pp]) / (2.0 * apq);
                        const double t = (theta >= 0 ? 1.0 : -1.0) /
                                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                        const double cc = 1.0 / std::sqrt(t * t + 1.0);
                        const double ss = t * cc;
                        for (std::size_t k = 0; k < n; ++k) {
                            const double akp = a[k * n + pp], akq = a[k * n + q];
                            a[k * n + pp] = cc * akp - ss * akq;
                            a[k * n + q] = ss * akp + cc * akq;
                        }
                        for (std::size_t k = 0; k < n; ++k) {
                            const double apk = a[pp * n + k], aqk = a[q * n + k];
                            a[pp * n + k] = cc * apk - ss * aqk;
                            a[q * n + k] = ss * apk + cc * aqk;
                        }
                    }
            double expect = 0.0;
            for (std::size_t i = 0; i < n; ++i) expect = std::max(expect, std::abs(a[i * n + i]));
            worst = std::max(worst, std::abs(got - expect));
        }
        ok = ok && worst <= 1e-6;
        detail += ", dense-eig dev " + fmt(worst);
    }
    // Strict convexity with eta < 2/lambda_max keeps gamma_hat negative for
    // every prefix length.
    {
        const SyntheticLandscape quad = SyntheticLandscape::quadratic({1.8, 0.3, 0.9, 1.2});
        LandscapeObjective obj(quad, 0.5);
        SpectralProbe p;
        p.grad = [&quad](std::span<const double> w) { return quad.grad(w); };
        SgdState st = SgdState::make(vector_params({1.0, -2.0, 0.3, 0.8}), 0.5, 777);
        LyapunovProbe probe;
        probe.cadence = 1;
        probe.log_norm = [&p](std::span<const double> w) {
            return std::log(spectral_norm_shifted(p, w, 0.5).value);
        };
        std::vector<TrajectoryRecord> recs;
        run_chain(st, obj, 400, {}, &recs, &probe);
        ErgodicAccumulator acc;
        bool always_negative = true;
        for (const TrajectoryRecord& rec : recs) {
            acc.record(rec);
            always_negative = always_negative && lyapunov_running(acc) < 0.0;
        }
        ok = ok && always_negative;
        detail += std::string(", convex-chain sign ") + (always_negative ? "negative" : "BROKEN");
    }
    record(4, "Lyapunov closed forms and convex contraction", ok, detail);
}

void criterion_5_ergodic_averages() {
    // AR(1): w <- (1-eta)w - eta*xi on the lambda=1 quadratic with sigma=1.
    LandscapeObjective obj(SyntheticLandscape::quadratic({1.0}), 1.0);
    SgdState st = SgdState::make(vector_params({0.0}), 0.1, 271828);
    ErgodicAccumulator acc;
    std::vector<TrajectoryRecord> recs;
    recs.reserve(1000000);
    run_chain(st, obj, 1000000, {}, &recs);
    for (const TrajectoryRecord& rec : recs) acc.record(rec);

    MeasureSketch sketch(1, 271828);
    SgdState st2 = SgdState::make(vector_params({0.0}), 0.1, 271828);
    const Observer obs = [&sketch](const TrajectoryRecord&, std::span<const double> w) {
        sketch.record(w);
    };
    std::vector<TrajectoryRecord> recs2;
    run_chain(st2, obj, 100000, std::span<const Observer>(&obs, 1), &recs2);

    const double mean_f = ergodic_means(acc).f_orig;
    const double expect = 0.026316;
    const double rel = std::abs(mean_f - expect) / expect;
    const double tv = sketch.tv_distance();
    record(5, "AR(1) ergodic mean and measure stability", rel <= 0.05 && tv <= 0.05,
           "mean f " + fmt(mean_f) + " vs 0.026316 (rel " + fmt(rel) + " <= 0.05), TV " +
               fmt(tv) + " <= 0.05");
}

void criterion_6_barrier_bypass() {
    const PathCertificate cert = build_bypass_certificate();
    const CertificateCheck check = verify_path_certificate(cert);
    record(6, "ridge2d barrier-bypass certificate", check.valid,
           check.valid ? "f_ext non-increasing within 1e-9, drop " + fmt(check.f_orig_drop) +
                             " > epsilon " + fmt(cert.epsilon)
                       : check.violation);
}

struct SmokeResult {
    StudyReport report;
    double seconds = 0.0;
    fs::path out_dir;
    bool real_mnist = false;
};

SmokeResult run_smoke_study(const fs::path& workdir) {
    ExperimentConfig cfg;
    cfg.runs = 5;
    cfg.epochs = 120;
    cfg.eta = 0.05;
    cfg.ghost_e = 2;
    cfg.model_kind = "cnn2block";
    cfg.batch_mode = "full_batch";
    cfg.momentum = 0.0;
    cfg.per_class = 30;
    cfg.test_count = 500;
    cfg.diag_cadence = 30;
    cfg.diag_power_iters = 12;
    cfg.parallel = 2;
    cfg.seed = 20240809;
    cfg.output_dir = (workdir / "smoke").string();

    SmokeResult res;
    if (const char* dir = std::getenv("GHOSTGRAD_DATA_DIR"); dir && *dir &&
        fs::exists(fs::path(dir) / "train-images-idx3-ubyte")) {
        cfg.dataset_source = dir;
        res.real_mnist = true;
    } else {
        cfg.dataset_source = "synth";
        cfg.synth_train_per_class = 120;
        cfg.synth_test_per_class = 50;
    }

    const auto t0 = std::chrono::steady_clock::now();
    res.report = run_study(cfg);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.out_dir = cfg.output_dir;
    emit_study_files(res.report, res.out_dir);
    emit_plots(res.report, res.out_dir / "plots");
    return res;
}

void criterion_7_smoke_study(const SmokeResult& smoke) {
    const StudyReport& r = smoke.report;
    bool ok = r.summary.runs_ok == 5;
    for (const RunResult& run : r.runs) {
        ok = ok && run.baseline.epochs.size() == 120 && run.ghost.epochs.size() == 120;
        ok = ok && run.baseline.clamp_events == 0 && run.ghost.clamp_events == 0;
    }
    ok = ok && r.summary.init_inequality_ok;
    ok = ok && smoke.seconds <= 300.0;

    std::string shift = "n/a";
    if (r.summary.paired_peaks > 0) shift = fmt(r.summary.mean_peak_shift);
    record(7, "RMNIST/30 smoke study (5 paired runs, CI gate)", ok,
           std::string(smoke.real_mnist ? "real MNIST" : "synthetic digits") + ", " +
               fmt(smoke.seconds) + "s <= 300s, init inequality holds, reported shift " + shift +
               " epochs over " + std::to_string(r.summary.paired_peaks) +
               " paired runs (direction reported, not asserted; reference 4.8)");
}

void criterion_8_ghost_loss_decay(const SmokeResult& smoke) {
    bool ok = true;
    double worst_ratio = 0.0;
    for (const RunResult& run : smoke.report.runs) {
        const double q1 = run.ghost.f_ghost_q1;
        const double q4 = run.ghost.f_ghost_q4;
        const double ratio = q1 > 0.0 ? q4 / q1 : 0.0;
        worst_ratio = std::max(worst_ratio, ratio);
        ok = ok && q1 > 0.0 && ratio < 0.10;
    }
    record(8, "ghost-loss ergodic decay in every ghost run", ok,
           "worst final/first quarter ratio " + fmt(worst_ratio) + " < 0.10");
}

void criterion_9_data_integrity(const fs::path& workdir) {
    bool ok = true;
    std::string detail;

    // Count validation: real files when available, exact-shape stand-ins
    // otherwise.
    if (const char* dir = std::getenv("GHOSTGRAD_DATA_DIR"); dir && *dir &&
        fs::exists(fs::path(dir) / "train-images-idx3-ubyte")) {
        const Dataset train = load_idx_dataset(dir, "train");
        const Dataset test = load_idx_dataset(dir, "t10k");
        ok = ok && train.count == 60000 && test.count == 10000;
        detail = "official files 60000/10000";
    } else {
        IdxFile img;
        img.magic = 0x00000803;
        img.dims = {60000, 28, 28};
        img.payload.assign(60000ull * 28 * 28, 0);
        IdxFile lab;
        lab.magic = 0x00000801;
        lab.dims = {10000};
        lab.payload.assign(10000, 4);
        ok = ok && parse_idx(serialize_idx(img)).dims[0] == 60000;
        ok = ok && parse_idx(serialize_idx(lab)).dims[0] == 10000;
        detail = "structural stand-ins 60000/10000";
    }

    // Twenty mutations must all be rejected.
    IdxFile img;
    img.magic = 0x00000803;
    img.dims = {10, 28, 28};
    img.payload.assign(10 * 28 * 28, 9);
    const std::vector<std::uint8_t> good = serialize_idx(img);
    int rejected = 0;
    for (std::size_t pos = 0; pos < 10; ++pos) {
        std::vector<std::uint8_t> bad = good;
        bad[pos] ^= 0xA5;
        try {
            parse_idx(bad);
        } catch (const FormatError&) {
            ++rejected;
        }
    }
    for (std::size_t cut = 1; cut <= 10; ++cut) {
        std::vector<std::uint8_t> bad(good.begin(),
                                      good.end() - static_cast<std::ptrdiff_t>(cut * 31));
        try {
            parse_idx(bad);
        } catch (const FormatError&) {
            ++rejected;
        }
    }
    ok = ok && rejected == 20;

    // RMNIST sampling: exactly 30 per class, deterministic per seed.
    const Dataset full = synth_digits(60, 5);
    const Dataset s1 = rmnist_sample(full, 30, 42);
    const Dataset s2 = rmnist_sample(full, 30, 42);
    std::array<int, 10> counts{};
    for (const int l : s1.labels) ++counts[static_cast<std::size_t>(l)];
    for (const int c : counts) ok = ok && c == 30;
    ok = ok && s1.images == s2.images && s1.count == 300;

    (void)workdir;
    record(9, "IDX validation, mutation rejection, RMNIST sampling", ok,
           detail + ", " + std::to_string(rejected) + "/20 mutations rejected, 30/class");
}

void criterion_10_determinism(const fs::path& workdir) {
    ExperimentConfig cfg;
    cfg.dataset_source = "synth";
    cfg.synth_train_per_class = 40;
    cfg.synth_test_per_class = 10;
    cfg.per_class = 10;
    cfg.runs = 2;
    cfg.epochs = 4;
    cfg.model_kind = "mlp";
    cfg.hidden = {16};
    cfg.ghost_e = 2;
    cfg.diag_cadence = 2;
    cfg.diag_power_iters = 10;
    cfg.parallel = 2;

    const fs::path a = workdir / "det_a";
    const fs::path b = workdir / "det_b";
    for (const fs::path& dir : {a, b}) {
        const StudyReport rep = run_study(cfg);
        emit_study_files(rep, dir);
        emit_plots(rep, dir / "plots");
    }
    bool ok = slurp(a / "runs.csv") == slurp(b / "runs.csv");
    ok = ok && slurp(a / "summary.json") == slurp(b / "summary.json");
    std::size_t plot_count = 0;
    for (const auto& entry : fs::directory_iterator(a / "plots")) {
        const fs::path rel = entry.path().filename();
        ok = ok && slurp(a / "plots" / rel) == slurp(b / "plots" / rel);
        ++plot_count;
    }
    record(10, "byte-identical CSV and SVG outputs on re-run", ok,
           "csv + json + " + std::to_string(plot_count) + " svg files identical");
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    fs::path workdir = fs::temp_directory_path() / "ghostgrad_acceptance";
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--workdir") workdir = argv[i + 1];
    fs::remove_all(workdir);
    fs::create_directories(workdir);

    criterion_1_gradient_correctness();
    criterion_2_loss_decomposition();
    criterion_3_collapse();
    criterion_4_lyapunov_closed_forms();
    criterion_5_ergodic_averages();
    criterion_6_barrier_bypass();
    const SmokeResult smoke = run_smoke_study(workdir);
    criterion_7_smoke_study(smoke);
    criterion_8_ghost_loss_decay(smoke);
    criterion_9_data_integrity(workdir);
    criterion_10_determinism(workdir);

    int failures = 0;
    for (const Outcome& o : g_outcomes)
        if (!o.pass) ++failures;
    std::cout << (failures == 0 ? "acceptance: all criteria passed"
                                : "acceptance: " + std::to_string(failures) + " criteria FAILED")
              << std::endl;
    return failures == 0 ? 0 : 1;
}

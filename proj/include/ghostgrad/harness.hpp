#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ghostgrad/data_io.hpp"
#include "ghostgrad/diagnostics.hpp"
#include "ghostgrad/landscapes.hpp"
#include "ghostgrad/optim.hpp"

namespace ghostgrad {

// Flat "key = value" experiment description. Every field has a default; the
// materialized copy written next to the results spells out all of them, so a
// results directory fully describes its run.
struct ExperimentConfig {
    // data
    std::string dataset_source = "synth";  // "synth" or a directory of IDX files
    std::size_t per_class = 30;
    std::size_t test_count = 0;  // cap on test samples; 0 = whole test set
    std::size_t synth_train_per_class = 200;
    std::size_t synth_test_per_class = 100;
    std::uint64_t synth_seed = 7;
    // study
    std::uint64_t seed = 1;
    std::size_t runs = 30;
    std::size_t epochs = 200;
    double eta = 0.05;
    double momentum = 0.0;
    int ghost_e = 2;
    std::string gamma_init = "zeros";  // zeros | small_gaussian | frozen
    // model
    std::string model_kind = "cnn2block";  // cnn2block | mlp
    std::size_t conv1_channels = 8;
    std::size_t conv2_channels = 16;
    std::vector<std::size_t> hidden = {32};
    std::string head_activation = "identity";
    // optimizer
    std::string batch_mode = "full_batch";  // full_batch | with_replacement | without_replacement
    std::size_t batch_size = 0;             // 0 = full
    double domain_bound = 1000.0;
    // diagnostics
    std::uint64_t diag_cadence = 10;  // steps between Hessian probes; 0 = off
    std::size_t diag_power_iters = 100;
    double diag_tol = 1e-8;
    std::size_t smooth_window = 1;
    // objective for `diag lyapunov`: dataset | quadratic | saddle | ridge2d
    std::string objective = "dataset";
    std::vector<double> quad_spectrum = {2.0};
    double noise_sigma = 0.0;
    std::size_t steps = 10000;
    std::vector<double> start_point = {1.0};
    // execution
    std::size_t parallel = 0;  // concurrent runs; 0 = hardware threads
    std::string output_dir = "out";

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path);
    std::string materialize() const;
    void validate() const;

    ModelSpec model_spec(std::uint64_t init_seed, int ghosts) const;
};

struct EpochMetrics {
    double train_loss = 0.0;  // extended loss seen by the optimizer
    double test_loss = 0.0;   // extended loss on held-out data
    double test_acc = 0.0;
    double gamma_hat = std::numeric_limits<double>::quiet_NaN();  // running estimate
    double f_ghost_mean = 0.0;  // running ergodic mean of the ghost term
};

struct ArmResult {
    std::string arm;  // "baseline" or "ghost"
    double init_train_loss = 0.0;
    double init_test_loss = 0.0;
    double init_test_acc = 0.0;
    std::vector<EpochMetrics> epochs;
    std::optional<std::size_t> peak_epoch;  // index into epochs (0-based)
    double f_ghost_q1 = 0.0;  // mean over first quarter of steps
    double f_ghost_q4 = 0.0;  // mean over last quarter
    std::uint64_t clamp_events = 0;
    std::uint64_t final_param_hash = 0;
    double wall_seconds = 0.0;
    bool failed = false;
    std::string fail_reason;
};

struct RunResult {
    std::size_t run_id = 0;  // 1-based
    std::uint64_t run_seed = 0;
    ArmResult baseline;
    ArmResult ghost;
};

struct StudySummary {
    std::size_t runs_total = 0;
    std::size_t runs_ok = 0;
    std::vector<std::size_t> failed_runs;
    std::size_t paired_peaks = 0;  // runs where both arms have a detected peak
    std::size_t baseline_peak_missing = 0;
    std::size_t ghost_peak_missing = 0;
    double mean_peak_shift = std::numeric_limits<double>::quiet_NaN();  // baseline - ghost
    double shift_reference_epochs = 4.8;  // published figure, for side-by-side reporting
    bool init_inequality_ok = true;  // ghost init test loss >= baseline in every run
    std::vector<double> mean_test_loss_baseline, sd_test_loss_baseline;
    std::vector<double> mean_test_loss_ghost, sd_test_loss_ghost;
};

struct StudyReport {
    ExperimentConfig config;
    std::vector<RunResult> runs;
    StudySummary summary;
};

// Trains baseline (e=0) and ghost arms for every run seed and aggregates.
// Runs execute concurrently up to config.parallel; results are deterministic
// regardless of scheduling.
StudyReport run_study(const ExperimentConfig& config, std::ostream* log = nullptr);

// Flat rows mirrored to CSV, one per (run, arm, epoch).
struct CsvRow {
    std::size_t run_id = 0;
    std::string arm;
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double test_loss = 0.0;
    double test_acc = 0.0;
    double gamma_hat = std::numeric_limits<double>::quiet_NaN();
    double f_ghost_mean = 0.0;
};

std::vector<CsvRow> report_rows(const StudyReport& report);
std::string csv_text(std::span<const CsvRow> rows);
std::vector<CsvRow> parse_csv(const std::string& text);

// Writes config.cfg, runs.csv and summary.json into dir.
void emit_study_files(const StudyReport& report, const std::filesystem::path& dir);
// Writes the two summary charts and the per-metric panel grids.
std::vector<std::string> emit_plots(const StudyReport& report, const std::filesystem::path& dir);
// Rebuilds a report (sufficient for plotting) from an output directory.
StudyReport load_report(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Barrier-bypass certificate.

// A sampled curve (w(t), gamma(t)) in the extended space, plus the claim that
// the extended loss never rises along it while the original loss ends at
// least epsilon below its start.
struct PathCertificate {
    std::vector<std::array<double, 2>> w;  // ridge2d coordinates
    std::vector<double> gamma;
    std::vector<double> f_ext;
    double f_orig_start = 0.0;
    double f_orig_end = 0.0;
    double epsilon = 0.0;
    double tolerance = 1e-9;
};

struct CertificateCheck {
    bool valid = false;
    std::string violation;  // empty when valid
    std::optional<std::size_t> first_bad_sample;
    double f_orig_drop = 0.0;
};

CertificateCheck verify_path_certificate(const PathCertificate& cert);

// Constructs the ridge2d demonstration: ghost potential log(1 + e^-gamma)
// with budget log(1 + e^2) at gamma0 = -2, a constant-f_ext leg that carries
// w over the ridge, then a strictly descending leg into the deeper well.
// The well/ridge locations come from root-finding the ridge2d derivative.
PathCertificate build_bypass_certificate(std::size_t samples = 201, double epsilon = 0.55);

// ---------------------------------------------------------------------------
// Landscape-backed gradient oracle for diagnostic chains: g = grad f + sigma xi.

class LandscapeObjective : public GradientOracle {
  public:
    LandscapeObjective(SyntheticLandscape landscape, double noise_sigma);
    std::size_t dim() const override;
    GradSample estimate(std::span<const double> w, CounterRng& rng) override;
    std::vector<double> full_gradient(std::span<const double> w) override;
    const SyntheticLandscape& landscape() const { return landscape_; }

  private:
    SyntheticLandscape landscape_;
    double sigma_;
};

// Lyapunov diagnostic over whatever objective the config names; prints the
// running estimate at checkpoints and a final verdict.
int run_lyapunov_diagnostic(const ExperimentConfig& config, std::ostream& out);

// Quick end-to-end property checks for `selftest`. Returns failure count and
// prints one line per check.
int run_selftest(std::ostream& out);

}  // namespace ghostgrad

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ghostgrad/harness.hpp"
#include "ghostgrad/runtime.hpp"

namespace {

using namespace ghostgrad;

ExperimentConfig load_config_with_env(const std::string& path) {
    ExperimentConfig cfg = ExperimentConfig::load(path);
    if (const char* dir = std::getenv("GHOSTGRAD_DATA_DIR"); dir && *dir) {
        std::cout << "dataset.source overridden by GHOSTGRAD_DATA_DIR = " << dir << "\n";
        cfg.dataset_source = dir;
    }
    return cfg;
}

int cmd_study_run(const std::string& config_path, const std::string& out_override) {
    ExperimentConfig cfg = load_config_with_env(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    const StudyReport report = run_study(cfg, &std::cout);
    emit_study_files(report, cfg.output_dir);
    emit_plots(report, std::filesystem::path(cfg.output_dir) / "plots");
    std::cout << "results written to " << cfg.output_dir << "\n";
    if (!report.summary.init_inequality_ok) {
        std::cout << "validation failure: ghost arm init test loss fell below baseline\n";
        return 1;
    }
    return 0;
}

int cmd_study_plot(const std::string& dir) {
    const StudyReport report = load_report(dir);
    const auto files = emit_plots(report, std::filesystem::path(dir) / "plots");
    for (const std::string& f : files) std::cout << f << "\n";
    return 0;
}

int cmd_data_fetch(const std::string& dir, const std::string& url, const std::string& checksum) {
    const FetchResult res = fetch_mnist(dir, url, checksum);
    for (const auto& [name, digest] : res.sha256)
        std::cout << digest << "  " << name << "\n";
    std::cout << "fetched " << res.files.size() << " files into " << dir << "\n";
    return 0;
}

int cmd_data_synth(const std::string& dir, std::size_t train_per_class,
                   std::size_t test_per_class, std::uint64_t seed) {
    const Dataset train = synth_digits(train_per_class, seed);
    const Dataset test = synth_digits(test_per_class, seed + 1);
    write_idx_dataset(dir, train, test);
    std::cout << "wrote synthetic IDX dataset (" << train.count << " train / " << test.count
              << " test) into " << dir << "\n";
    return 0;
}

int cmd_diag_lyapunov(const std::string& config_path) {
    const ExperimentConfig cfg = load_config_with_env(config_path);
    return run_lyapunov_diagnostic(cfg, std::cout);
}

int cmd_demo_bypass(std::size_t samples, const std::string& out_json) {
    const PathCertificate cert = build_bypass_certificate(samples);
    const CertificateCheck check = verify_path_certificate(cert);
    std::cout << "barrier-bypass certificate on ridge2d with " << cert.f_ext.size()
              << " samples, epsilon = " << cert.epsilon << "\n";
    std::cout << "f_orig(start) = " << cert.f_orig_start << ", f_orig(end) = " << cert.f_orig_end
              << ", drop = " << check.f_orig_drop << "\n";
    if (check.valid) {
        std::cout << "certificate VALID: f_ext never rises (tolerance " << cert.tolerance
                  << ") and the drop beats epsilon\n";
    } else {
        std::cout << "certificate INVALID: " << check.violation << "\n";
    }
    if (!out_json.empty()) {
        nlohmann::ordered_json j;
        j["epsilon"] = cert.epsilon;
        j["tolerance"] = cert.tolerance;
        j["f_orig_start"] = cert.f_orig_start;
        j["f_orig_end"] = cert.f_orig_end;
        j["valid"] = check.valid;
        nlohmann::ordered_json pts = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < cert.f_ext.size(); ++i)
            pts.push_back({{"w1", cert.w[i][0]},
                           {"w2", cert.w[i][1]},
                           {"gamma", cert.gamma[i]},
                           {"f_ext", cert.f_ext[i]}});
        j["samples"] = std::move(pts);
        std::ofstream out(out_json, std::ios::binary);
        if (!out) throw IoError("cannot write " + out_json);
        out << j.dump(2) << "\n";
        std::cout << "certificate written to " << out_json << "\n";
    }
    return check.valid ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    ghostgrad::tune_allocator();
    CLI::App app{"ghostgrad: SGD Lyapunov diagnostics and ghost-extended classifiers"};
    app.require_subcommand(1);

    auto* study = app.add_subcommand("study", "run or plot the paired baseline-vs-ghost study");
    study->require_subcommand(1);
    std::string study_config, study_out, plot_dir;
    auto* study_run = study->add_subcommand("run", "train all runs from a config file");
    study_run->add_option("config", study_config, "experiment config file")->required();
    study_run->add_option("--out", study_out, "override output_dir");
    auto* study_plot = study->add_subcommand("plot", "re-emit plots from a results directory");
    study_plot->add_option("dir", plot_dir, "results directory")->required();

    auto* data = app.add_subcommand("data", "dataset management");
    data->require_subcommand(1);
    std::string fetch_dir = "data/mnist", fetch_url = "http://yann.lecun.com/exdb/mnist",
                fetch_checksum;
    auto* data_fetch = data->add_subcommand("fetch", "download MNIST and verify checksums");
    data_fetch->add_option("--dir", fetch_dir, "target directory");
    data_fetch->add_option("--url", fetch_url, "mirror base url (http)");
    data_fetch->add_option("--checksum", fetch_checksum,
                           "file of '<sha256hex>  <name>' lines to verify against");
    std::string synth_dir = "data/synth";
    std::size_t synth_train = 200, synth_test = 100;
    std::uint64_t synth_seed = 7;
    auto* data_synth = data->add_subcommand("synth", "generate a synthetic MNIST-format dataset");
    data_synth->add_option("--dir", synth_dir, "target directory");
    data_synth->add_option("--train-per-class", synth_train, "training samples per class");
    data_synth->add_option("--test-per-class", synth_test, "test samples per class");
    data_synth->add_option("--seed", synth_seed, "generator seed");

    auto* diag = app.add_subcommand("diag", "diagnostics");
    diag->require_subcommand(1);
    std::string diag_config;
    auto* diag_lyap = diag->add_subcommand("lyapunov", "running largest-Lyapunov-exponent estimate");
    diag_lyap->add_option("config", diag_config, "experiment config file")->required();

    auto* demo = app.add_subcommand("demo", "demonstrations");
    demo->require_subcommand(1);
    std::size_t bypass_samples = 201;
    std::string bypass_out;
    auto* demo_bypass = demo->add_subcommand("bypass", "ridge2d barrier-bypass certificate");
    demo_bypass->add_option("--samples", bypass_samples, "path sample count");
    demo_bypass->add_option("--out", bypass_out, "write certificate JSON here");

    auto* selftest = app.add_subcommand("selftest", "run the built-in property checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints usage or error text
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        if (study_run->parsed()) return cmd_study_run(study_config, study_out);
        if (study_plot->parsed()) return cmd_study_plot(plot_dir);
        if (data_fetch->parsed()) return cmd_data_fetch(fetch_dir, fetch_url, fetch_checksum);
        if (data_synth->parsed()) return cmd_data_synth(synth_dir, synth_train, synth_test, synth_seed);
        if (diag_lyap->parsed()) return cmd_diag_lyapunov(diag_config);
        if (demo_bypass->parsed()) return cmd_demo_bypass(bypass_samples, bypass_out);
        if (selftest->parsed()) return run_selftest(std::cout) == 0 ? 0 : 1;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

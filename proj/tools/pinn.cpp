// Command-line front end. Subcommand bodies live here; everything they call
// is the header-only library. Exit codes: 0 ok, 1 runtime or math failure,
// 2 usage error. The only environment variable honored is PINN_OUT_ROOT,
// which overrides the output root between the config file and the flags.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "pinn/checkpoint.hpp"
#include "pinn/config.hpp"
#include "pinn/metrics.hpp"
#include "pinn/problems.hpp"
#include "pinn/report.hpp"
#include "pinn/spectral.hpp"
#include "pinn/training.hpp"
#include "pinn/verify.hpp"

namespace {

namespace fs = std::filesystem;
using pinn::ConfigError;
using pinn::Json;
using pinn::RunConfig;

// Flag values shared across subcommands; count() decides which ones apply.
struct Flags {
    std::string config_path, problem, out_root, arch = "xlstm";
    bool paired = false, single_run = false, json = false;
    std::uint64_t seed = 1, seed0 = 1;
    int budget = 0, width = 0, depth = 0, micro_steps = 0;
    double lr = 0.0, eps = 0.0, phase = 0.0;
    int k_min = 0, k_max = 0, seeds = 0, train_points = 0, dense_points = 0;
    int feature_points = 0, feature_layer = 0, probe_block = 0;
    std::vector<std::string> only;
};

RunConfig assemble(const CLI::App& cmd, const Flags& f) {
    RunConfig rc;
    if (!f.config_path.empty()) {
        std::string text;
        try {
            text = pinn::detail::read_file(f.config_path);
        } catch (const pinn::CheckpointError& e) {
            throw ConfigError(e.what());
        }
        rc = pinn::parse_run_config(text);
    }
    if (const char* env = std::getenv("PINN_OUT_ROOT"); env && *env) rc.out_root = env;

    const auto set = [&cmd](const char* name) {
        const CLI::Option* opt = cmd.get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (set("--problem")) rc.problem = f.problem;
    if (set("--paired")) rc.paired = true;
    if (set("--single")) rc.paired = false;
    if (set("--out")) rc.out_root = f.out_root;
    if (set("--seed")) rc.train.seed = f.seed;
    if (set("--budget")) rc.train.budget = f.budget;
    if (set("--width")) rc.train.model.width = f.width;
    if (set("--depth")) rc.train.model.depth = f.depth;
    if (set("--micro-steps")) rc.train.model.micro_steps = f.micro_steps;
    if (set("--lr")) rc.train.adam.lr = f.lr;
    if (set("--arch")) rc.train.model.arch = pinn::arch_from_name(f.arch);

    if (set("--probe-budget")) rc.probe.budget = f.budget;
    if (set("--kmin")) rc.probe.k_min = f.k_min;
    if (set("--kmax")) rc.probe.k_max = f.k_max;
    if (set("--seeds")) rc.probe.seeds = f.seeds;
    if (set("--seed0")) rc.probe.seed0 = f.seed0;
    if (set("--eps")) rc.probe.eps = f.eps;
    if (set("--phase")) rc.probe.phase = f.phase;
    if (set("--train-points")) rc.probe.train_points = f.train_points;
    if (set("--dense-points")) rc.probe.dense_points = f.dense_points;
    if (set("--probe-width")) rc.probe.model.width = f.width;
    if (set("--probe-depth")) rc.probe.model.depth = f.depth;
    if (set("--probe-micro-steps")) rc.probe.model.micro_steps = f.micro_steps;
    if (set("--feature-points")) rc.probe.feature_points = f.feature_points;
    if (set("--feature-layer")) rc.probe.feature_layer = f.feature_layer;
    if (set("--probe-block")) rc.probe.probe_block = f.probe_block;
    return rc;
}

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file; flags override its fields");
    cmd->add_option("--out", f.out_root, "output root directory");
}

int cmd_train(const CLI::App& cmd, const Flags& f) {
    const RunConfig rc = assemble(cmd, f);
    const pinn::ProblemSpec spec = pinn::problem_by_name(rc.problem);
    const std::string snapshot = pinn::to_json(rc).dump();

    bool aborted = false;
    std::vector<pinn::MetricRecord> rows;
    if (rc.paired) {
        const pinn::PairedRuns pair = pinn::train_pair(spec, rc.train);
        rows = pinn::write_pair_artifacts(rc.out_root, spec, pair, snapshot);
        aborted = pair.xlstm.aborted || pair.baseline.aborted;
        if (pair.xlstm.aborted)
            std::fprintf(stderr, "pinn train: xlstm run aborted non-finite at step %d\n",
                         pair.xlstm.abort_step);
        if (pair.baseline.aborted)
            std::fprintf(stderr, "pinn train: baseline run aborted non-finite at step %d\n",
                         pair.baseline.abort_step);
    } else {
        const pinn::RunRecord rec = pinn::train(spec, rc.train);
        rows.push_back(pinn::write_run_artifacts(rc.out_root, spec, rec, snapshot));
        aborted = rec.aborted;
        if (rec.aborted)
            std::fprintf(stderr, "pinn train: run aborted non-finite at step %d\n",
                         rec.abort_step);
    }
    std::fputs(pinn::metrics_text(rows).c_str(), stdout);
    std::printf("artifacts: %s\n",
                (fs::path(rc.out_root) / "runs" / spec.name).string().c_str());
    if (aborted) std::fprintf(stderr, "pinn train: partial artifacts retained\n");
    return aborted ? 1 : 0;
}

int cmd_spectral(const CLI::App& cmd, const Flags& f) {
    RunConfig rc = assemble(cmd, f);
    rc.probe.model.input_dim = 1;  // the plane-wave probe is one-dimensional
    const std::string snapshot = pinn::to_json(rc).dump();

    const pinn::FrequencyReport rep = pinn::frequency_benchmark(rc.probe);
    pinn::write_spectral_artifacts(rc.out_root, rep, snapshot);
    std::printf("k* gated %.6g, k* baseline %.6g, %d of %zu samples dropped\n", rep.kstar_x,
                rep.kstar_base, rep.dropped, rep.samples.size());
    std::printf("artifacts: %s\n", (fs::path(rc.out_root) / "spectral").string().c_str());
    return 0;
}

int cmd_kernel_probe(const CLI::App& cmd, const Flags& f) {
    RunConfig rc = assemble(cmd, f);
    rc.probe.model.input_dim = 1;  // probed along plane waves in the first coordinate
    const std::string snapshot = pinn::to_json(rc).dump();

    pinn::ModelConfig cfg = rc.probe.model;
    cfg.arch = pinn::Arch::XLstm;
    // the linearized cell is the all-sigmoid classic one; the probe owns the gates
    cfg.input_gate = pinn::GateMode::Sigmoid;
    cfg.forget_gate = pinn::GateMode::Sigmoid;
    cfg.validate();
    const pinn::ParamLayout lay = pinn::ParamLayout::build(cfg);
    const Eigen::VectorXd theta =
        pinn::init_params(cfg, pinn::derive_seed(rc.probe.seed0, "kernel/init"));

    pinn::Rng rng(pinn::derive_seed(rc.probe.seed0, "kernel/points"));
    pinn::Arr pts(rc.probe.feature_points, cfg.input_dim);
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        for (Eigen::Index j = 0; j < pts.cols(); ++j) pts(i, j) = rng.uniform(-1.0, 1.0);

    const pinn::Arr phi = pinn::layer_features(cfg, lay, theta, pts, rc.probe.feature_layer);
    const pinn::ClassicCell cell = pinn::cell_slices(cfg, lay, theta, rc.probe.probe_block);
    const Eigen::VectorXd at_rest = phi.colwise().mean().matrix().transpose();
    const Eigen::MatrixXd A = pinn::compute_A(cell, at_rest);

    std::vector<double> ks;
    for (int k = rc.probe.k_min; k <= rc.probe.k_max; ++k) ks.push_back(k);
    const auto rows = pinn::kernel_pair(phi, pts, A, cfg.micro_steps, ks, rc.probe.phase);

    std::string csv = "# " + snapshot + "\n";
    csv += "k,lambda_base,lambda_x,alpha,ratio,degenerate\n";
    int held = 0, usable = 0;
    for (const auto& r : rows) {
        char line[256];
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.k,
                      r.lambda_base, r.lambda_x, r.alpha, r.ratio, r.degenerate ? 1 : 0);
        csv += line;
        if (!r.degenerate) {
            ++usable;
            if (r.lambda_x + 1e-9 * std::max(1.0, r.lambda_base) >=
                (1.0 + r.alpha) * r.lambda_base)
                ++held;
        }
    }
    const fs::path path = fs::path(rc.out_root) / "spectral" / "kernel.csv";
    pinn::detail::write_file(path, csv);
    std::printf("lift bound held on %d/%d usable directions at S=%d\n", held, usable,
                cfg.micro_steps);
    std::printf("artifacts: %s\n", path.string().c_str());
    return 0;
}

int cmd_verify(const Flags& f) {
    const auto results = pinn::run_suites(f.only);
    if (f.json) {
        Json out = Json::array();
        for (const auto& r : results)
            out.push_back(Json{{"name", r.name},
                               {"criterion", r.criterion},
                               {"pass", r.pass},
                               {"detail", r.detail},
                               {"notes", r.notes},
                               {"seconds", r.seconds}});
        std::printf("%s\n", out.dump(2).c_str());
    } else {
        std::fputs(pinn::format_results(results, true).c_str(), stdout);
    }
    for (const auto& r : results)
        if (!r.pass) return 1;
    return 0;
}

int cmd_report(const CLI::App& cmd, const Flags& f) {
    const RunConfig rc = assemble(cmd, f);
    const fs::path root = rc.out_root;

    std::vector<std::string> problems;
    if (cmd.count("--problem") > 0) {
        problems.push_back(rc.problem);
    } else {
        for (const auto& name : pinn::problem_names())
            if (fs::exists(root / "runs" / name)) problems.push_back(name);
    }
    if (problems.empty())
        throw ConfigError("no stored runs under " + (root / "runs").string());

    bool any = false;
    for (const auto& name : problems) {
        const pinn::ProblemSpec spec = pinn::problem_by_name(name);
        std::vector<pinn::MetricRecord> rows;
        for (const char* tag : {"xlstm", "baseline"}) {
            const pinn::RunPaths paths = pinn::run_paths(root, name, tag);
            if (!fs::exists(paths.history_json)) continue;
            pinn::RunRecord rec = pinn::load_history(paths.history_json);
            rec.theta = pinn::load_checkpoint(paths.params).array("theta");

            RunConfig replay;
            replay.problem = rec.problem;
            replay.paired = false;
            replay.train.model = rec.model;
            replay.train.adam = rec.adam;
            replay.train.budget = rec.budget;
            replay.train.seed = rec.seed;
            replay.out_root = rc.out_root;
            rows.push_back(
                pinn::write_run_artifacts(root, spec, rec, pinn::to_json(replay).dump()));
            any = true;
        }
        if (!rows.empty()) std::fputs(pinn::metrics_text(rows).c_str(), stdout);
    }
    if (!any) throw ConfigError("no run histories found under " + (root / "runs").string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"physics-informed training with a gated recurrent surrogate"};
    app.require_subcommand(1);
    Flags f;

    CLI::App* train = app.add_subcommand("train", "train one model or a matched pair");
    add_common(train, f);
    train->add_option("--problem", f.problem, "advection1d, laplace2d, disk-robin, poisson-beam");
    train->add_flag("--paired", f.paired, "train the gated model and its matched baseline");
    train->add_flag("--single", f.single_run, "train only the configured architecture");
    train->add_option("--arch", f.arch, "xlstm or baseline (single mode)");
    train->add_option("--seed", f.seed, "sampling and initialization seed");
    train->add_option("--budget", f.budget, "optimizer iterations");
    train->add_option("--width", f.width, "hidden width");
    train->add_option("--depth", f.depth, "block count");
    train->add_option("--micro-steps", f.micro_steps, "micro-steps per block");
    train->add_option("--lr", f.lr, "learning rate");

    CLI::App* spectral = app.add_subcommand("spectral", "plane-wave frequency benchmark");
    add_common(spectral, f);
    spectral->add_option("--probe-budget", f.budget, "iterations per regression");
    spectral->add_option("--kmin", f.k_min, "lowest wavenumber");
    spectral->add_option("--kmax", f.k_max, "highest wavenumber");
    spectral->add_option("--seeds", f.seeds, "seeds per wavenumber");
    spectral->add_option("--seed0", f.seed0, "base seed");
    spectral->add_option("--eps", f.eps, "relative-error threshold");
    spectral->add_option("--phase", f.phase, "plane-wave phase");
    spectral->add_option("--train-points", f.train_points, "regression collocation points");
    spectral->add_option("--dense-points", f.dense_points, "dense evaluation grid size");
    spectral->add_option("--probe-width", f.width, "probe model width");
    spectral->add_option("--probe-depth", f.depth, "probe model depth");
    spectral->add_option("--probe-micro-steps", f.micro_steps, "probe model micro-steps");

    CLI::App* kernel = app.add_subcommand("kernel-probe", "linearized kernel eigenvalue probe");
    add_common(kernel, f);
    kernel->add_option("--kmin", f.k_min, "lowest wavenumber");
    kernel->add_option("--kmax", f.k_max, "highest wavenumber");
    kernel->add_option("--seed0", f.seed0, "base seed");
    kernel->add_option("--phase", f.phase, "plane-wave phase");
    kernel->add_option("--feature-points", f.feature_points, "feature sample count");
    kernel->add_option("--feature-layer", f.feature_layer, "layer whose features are probed");
    kernel->add_option("--probe-block", f.probe_block, "block to linearize");
    kernel->add_option("--probe-width", f.width, "probe model width");
    kernel->add_option("--probe-depth", f.depth, "probe model depth");
    kernel->add_option("--probe-micro-steps", f.micro_steps, "probe model micro-steps");

    CLI::App* verify = app.add_subcommand("verify", "run the invariant suites");
    verify->add_option("--only", f.only, "run only the named suites")->expected(-1);
    verify->add_flag("--json", f.json, "machine-readable JSON summary");

    CLI::App* report = app.add_subcommand("report", "rebuild tables and plots from stored runs");
    add_common(report, f);
    report->add_option("--problem", f.problem, "limit to one problem");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "pinn: %s\nrun 'pinn --help' for usage\n", e.what());
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(*train, f);
        if (spectral->parsed()) return cmd_spectral(*spectral, f);
        if (kernel->parsed()) return cmd_kernel_probe(*kernel, f);
        if (verify->parsed()) return cmd_verify(f);
        if (report->parsed()) return cmd_report(*report, f);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "pinn: %s\nrun 'pinn --help' for usage\n", e.what());
        return 2;
    } catch (const pinn::CheckpointError& e) {
        std::fprintf(stderr, "pinn: load failure: %s\n", e.what());
        return 1;
    } catch (const pinn::ModelFault& e) {
        std::fprintf(stderr, "pinn: math failure: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "pinn: %s\n", e.what());
        return 1;
    }
    return 2;
}

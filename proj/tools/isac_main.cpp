#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "isac/harness.hpp"

namespace fs = std::filesystem;
using namespace isac;

namespace {

ExportFormat format_for(const std::string& path) {
    return path.size() >= 5 && path.substr(path.size() - 5) == ".json" ? ExportFormat::json
                                                                       : ExportFormat::csv;
}

std::vector<std::string> parse_methods(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item != "baseline" && item != "md" && item != "nn") {
            throw std::invalid_argument("unknown method '" + item + "'");
        }
        for (const auto& prev : out) {
            if (prev == item) throw std::invalid_argument("duplicate method '" + item + "'");
        }
        out.push_back(item);
    }
    if (out.empty()) throw std::invalid_argument("no methods given");
    return out;
}

bool wants(const std::vector<std::string>& methods, const std::string& m) {
    for (const auto& x : methods) {
        if (x == m) return true;
    }
    return false;
}

MdTrainConfig md_train_config(const ExperimentConfig& cfg) {
    MdTrainConfig t;
    t.iterations = cfg.md_iterations;
    t.batch_size = cfg.md_batch;
    t.lr = cfg.md_lr;
    t.n_grid = cfg.md_n_grid;
    t.init_noise_std = cfg.md_init_noise_std;
    t.estimate.masked_softmax = cfg.md_masked_softmax;
    t.estimate.temperature = cfg.md_temperature;
    return t;
}

NnTrainConfig nn_train_config(const ExperimentConfig& cfg, double omega_r) {
    NnTrainConfig t;
    t.omega_r = omega_r;
    t.width = cfg.nn_width;
    t.iterations_per_phase = cfg.nn_iterations_per_phase;
    t.batch_size = cfg.nn_batch;
    t.lr = cfg.nn_lr;
    t.bce_all_samples = cfg.nn_bce_all_samples;
    return t;
}

/// simulate/eval load exactly the one artifact the configured method needs.
SweepArtifacts load_single_artifact(const ExperimentConfig& cfg) {
    SweepArtifacts arts;
    if (cfg.method == "baseline") return arts;
    if (cfg.artifact.empty()) {
        throw std::invalid_argument("method '" + cfg.method + "' requires an artifact path");
    }
    if (!fs::exists(cfg.artifact)) {
        throw std::invalid_argument("artifact not found: " + cfg.artifact);
    }
    if (cfg.method == "md") {
        arts.md = load_mdas(cfg.artifact);
    } else {
        AeParams p = load_nnae(cfg.artifact);
        if (std::abs(p.omega_r - cfg.omega_r) >= 1e-12) {
            std::ostringstream msg;
            msg << "artifact " << cfg.artifact << " was trained at omega_r=" << p.omega_r
                << " but the config evaluates omega_r=" << cfg.omega_r;
            throw std::invalid_argument(msg.str());
        }
        arts.nn.emplace(p.omega_r, std::move(p));
    }
    return arts;
}

MetricsRecord eval_single(const ExperimentConfig& cfg, const SweepArtifacts& arts) {
    const auto [tx, rx] = cfg.make_geometries();
    EvalPoint p;
    p.geom_tx = tx;
    p.geom_rx = rx;
    p.scen = cfg.scenario();
    p.target_sector = cfg.target_sector();
    p.omega_r = cfg.omega_r;
    p.n_cal = cfg.n_cal;
    p.n_eval = cfg.n_eval;
    p.target_pfa = cfg.target_pfa;
    p.seed_label = cfg.seed;
    auto sys = make_system(cfg.method, cfg, arts, cfg.omega_r);
    Rng rng(cfg.resolved_eval_seed());
    return evaluate(*sys, p, rng);
}

/// Trains (or loads from `dir` when cached there) everything the sweep needs.
/// MD trains once for all omega_r; NN retrains per omega_r.
SweepArtifacts ensure_artifacts(const ExperimentConfig& cfg,
                                const std::vector<std::string>& methods, const std::string& dir) {
    SweepArtifacts arts;
    const auto [tx, rx] = cfg.make_geometries();
    const ScenarioConfig scen = cfg.scenario();
    if (!dir.empty()) fs::create_directories(dir);
    if (wants(methods, "md")) {
        const fs::path path = dir.empty() ? fs::path() : fs::path(dir) / "md.mdas";
        if (!dir.empty() && fs::exists(path)) {
            std::fprintf(stderr, "loading %s\n", path.string().c_str());
            arts.md = load_mdas(path.string());
        } else {
            std::fprintf(stderr, "training md (%d iterations)\n", cfg.md_iterations);
            Rng rng(cfg.resolved_train_seed());
            arts.md = train_md(md_train_config(cfg), tx, rx, scen, rng).steering;
            if (!dir.empty()) save_mdas(path.string(), *arts.md);
        }
    }
    if (wants(methods, "nn")) {
        for (size_t i = 0; i < cfg.omega_r_list.size(); ++i) {
            const double w = cfg.omega_r_list[i];
            const fs::path path =
                dir.empty() ? fs::path() : fs::path(dir) / ("nn_" + std::to_string(i) + ".nnae");
            if (!dir.empty() && fs::exists(path)) {
                std::fprintf(stderr, "loading %s\n", path.string().c_str());
                AeParams ae = load_nnae(path.string());
                if (std::abs(ae.omega_r - w) >= 1e-12) {
                    std::ostringstream msg;
                    msg << "stale artifact " << path.string() << ": trained at omega_r="
                        << ae.omega_r << ", sweep expects " << w;
                    throw std::invalid_argument(msg.str());
                }
                arts.nn.emplace(w, std::move(ae));
            } else {
                std::fprintf(stderr, "training nn at omega_r=%g (2 x %d iterations)\n", w,
                             cfg.nn_iterations_per_phase);
                Rng rng(cfg.resolved_train_seed());
                NnTrainResult r = train_nn(nn_train_config(cfg, w), tx, rx, scen, rng);
                if (!dir.empty()) save_nnae(path.string(), r.params);
                arts.nn.emplace(w, std::move(r.params));
            }
        }
    }
    return arts;
}

int cmd_simulate(const std::string& config_path, const std::optional<uint64_t>& seed) {
    ExperimentConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    const SweepArtifacts arts = load_single_artifact(cfg);
    const MetricsRecord rec = eval_single(cfg, arts);
    std::fputs(render_csv({rec}).c_str(), stdout);
    return 0;
}

int cmd_train(const std::string& method, const std::string& config_path, const std::string& out) {
    ExperimentConfig cfg = load_config(config_path);
    const auto [tx, rx] = cfg.make_geometries();
    const ScenarioConfig scen = cfg.scenario();
    Rng rng(cfg.resolved_train_seed());
    if (method == "md") {
        const MdTrainResult r = train_md(md_train_config(cfg), tx, rx, scen, rng);
        save_mdas(out, r.steering);
        const double final_loss = r.loss_history.empty() ? std::nan("") : r.loss_history.back();
        std::fprintf(stderr, "trained md: n_grid=%d iterations=%d final_loss=%g\n", cfg.md_n_grid,
                     cfg.md_iterations, final_loss);
    } else {
        const NnTrainResult r = train_nn(nn_train_config(cfg, cfg.nn_omega_r), tx, rx, scen, rng);
        save_nnae(out, r.params);
        const double l1 = r.loss_history_phase1.empty() ? std::nan("") : r.loss_history_phase1.back();
        const double l2 = r.loss_history_phase2.empty() ? std::nan("") : r.loss_history_phase2.back();
        std::fprintf(stderr,
                     "trained nn: omega_r=%g width=%d final_loss_phase1=%g final_loss_phase2=%g\n",
                     cfg.nn_omega_r, cfg.nn_width, l1, l2);
    }
    std::fprintf(stderr, "wrote %s\n", out.c_str());
    return 0;
}

int cmd_eval(const std::string& method, const std::string& artifact,
             const std::string& config_path, const std::string& out) {
    ExperimentConfig cfg = load_config(config_path);
    cfg.method = method;
    if (!artifact.empty()) cfg.artifact = artifact;
    cfg.validate();
    const SweepArtifacts arts = load_single_artifact(cfg);
    const MetricsRecord rec = eval_single(cfg, arts);
    export_results({rec}, out, format_for(out));
    std::fprintf(stderr, "wrote %s\n", out.c_str());
    return 0;
}

int cmd_sweep(const std::string& methods_csv, const std::string& config_path,
              const std::string& out, int geometry_seeds, const std::string& artifacts_dir) {
    const ExperimentConfig cfg = load_config(config_path);
    const std::vector<std::string> methods = parse_methods(methods_csv);
    if (geometry_seeds < 1) throw std::invalid_argument("--geometry-seeds must be >= 1");
    if (!artifacts_dir.empty() && geometry_seeds != 1) {
        throw std::invalid_argument("--artifacts-dir requires --geometry-seeds 1");
    }
    std::vector<MetricsRecord> all;
    for (int rep = 0; rep < geometry_seeds; ++rep) {
        ExperimentConfig c = cfg;
        if (rep > 0) {
            const uint64_t tag = static_cast<uint64_t>(rep);
            c.geometry_seed = Rng(cfg.resolved_geometry_seed()).derive(tag).seed();
            c.train_seed = Rng(cfg.resolved_train_seed()).derive(tag).seed();
            c.eval_seed = Rng(cfg.resolved_eval_seed()).derive(tag).seed();
            c.seed = Rng(cfg.seed).derive(tag).seed();
        }
        const SweepArtifacts arts = ensure_artifacts(c, methods, artifacts_dir);
        const SweepResult res = sweep_tradeoff(c, methods, arts);
        all.insert(all.end(), res.records.begin(), res.records.end());
    }
    export_results(all, out, format_for(out));
    std::fprintf(stderr, "wrote %zu rows -> %s\n", all.size(), out.c_str());
    return 0;
}

void check_fail(const std::string& what) {
    throw std::runtime_error("check failed: " + what);
}

/// Finite-difference spot check of the tape through the full differentiable
/// MD pipeline (precoder solve -> channel -> soft estimator -> loss).
void check_gradients() {
    const int k = 4;
    const int n_grid = 12;
    const int batch = 4;
    Rng rng(7);
    const SteeringGrid grid = SteeringGrid::make(k, n_grid);
    const TrainableSteering ts = init_steering(grid, 0.1, rng);
    const AngularSector sector = AngularSector::from_degrees(-30.0, 10.0);
    ScenarioConfig scen;
    const UlaGeometry geom = UlaGeometry::ideal(k);
    const Eigen::VectorXd mask = binary_mask(grid.theta_grid, sector).b;
    const EpisodeBatch ep = sample_episode_batch(batch, k, sector, scen.comm_sector, scen, rng,
                                                 PresenceMode::force_present);
    Eigen::MatrixXcd atx(batch, k);
    Eigen::MatrixXcd arx(batch, k);
    for (int i = 0; i < batch; ++i) {
        atx.row(i) = steering_vector(geom, ep.theta[i]).transpose();
        arx.row(i) = steering_vector(geom, ep.theta[i]).transpose();
    }
    const MdEstimateOptions opt;
    const auto build = [&](gt::Tape& t, const Eigen::MatrixXcd& a_val, gt::CVar& a) {
        a = c_input(t, a_val);
        const gt::CVar x = md_precoder_t(t, a, mask, scen.e_tx);
        const gt::CVar inner_full = c_matmul(t, c_constant(t, atx), x); // batch x 1
        const gt::CVar p = c_mul(t, inner_full, c_constant(t, ep.alpha));
        const gt::CVar y = c_add(t, c_row_scale(t, c_constant(t, arx), p),
                                 c_constant(t, ep.noise_r));
        const gt::Id theta_hat = md_estimate_batch_t(t, a, y, mask, grid.theta_grid, opt);
        const double r2d = 180.0 / M_PI;
        gt::Tensor target(batch, 1);
        for (int i = 0; i < batch; ++i) target(i, 0) = ep.theta[i] * r2d;
        const gt::Id err = t.sub(t.scale(theta_hat, r2d), t.constant(target));
        return t.mean(t.square(err));
    };
    gt::Tape tape;
    gt::CVar a{};
    const gt::Id loss = build(tape, ts.a, a);
    tape.backward(loss);
    const gt::Tensor g_re = tape.grad(a.re);
    const gt::Tensor g_im = tape.grad(a.im);
    const double h = 1e-5;
    double max_rel = 0.0;
    Rng probe(11);
    for (int p = 0; p < 6; ++p) {
        const int i = static_cast<int>(probe.uniform_index(static_cast<uint64_t>(k)));
        const int j = static_cast<int>(probe.uniform_index(static_cast<uint64_t>(n_grid)));
        const bool real_part = probe.uniform() < 0.5;
        const std::complex<double> delta = real_part ? std::complex<double>(h, 0.0)
                                                     : std::complex<double>(0.0, h);
        Eigen::MatrixXcd ap = ts.a;
        ap(i, j) += delta;
        Eigen::MatrixXcd am = ts.a;
        am(i, j) -= delta;
        gt::Tape tp;
        gt::CVar dummy{};
        const double fp = tp.value(build(tp, ap, dummy))(0, 0);
        gt::Tape tm;
        const double fm = tm.value(build(tm, am, dummy))(0, 0);
        const double fd = (fp - fm) / (2.0 * h);
        const double an = real_part ? g_re(i, j) : g_im(i, j);
        const double rel = std::abs(fd - an) / std::max(1e-8, std::max(std::abs(fd), std::abs(an)));
        max_rel = std::max(max_rel, rel);
    }
    if (max_rel >= 1e-4) {
        std::ostringstream msg;
        msg << "pipeline gradient mismatch, max relative error " << max_rel;
        check_fail(msg.str());
    }
    std::printf("gradients: ok (max relative error %.3g)\n", max_rel);
}

/// With A = A_ideal both receivers rank grid angles identically.
void check_detector_equivalence() {
    const int k = 8;
    const int n_grid = 64;
    Rng rng(23);
    const SteeringGrid grid = SteeringGrid::make(k, n_grid);
    const TrainableSteering ts{grid.a_ideal, grid.theta_grid};
    const AngularSector sector = AngularSector::from_degrees(-40.0, -20.0);
    const BeamTarget mask = binary_mask(grid.theta_grid, sector);
    ScenarioConfig scen;
    const UlaGeometry geom = UlaGeometry::ideal(k);
    const BeamTarget beam = desired_beampattern(sector, grid, static_cast<double>(k));
    const Eigen::VectorXcd x = ls_beamformer(grid.a_ideal, beam, scen.e_tx);
    for (int n = 0; n < 300; ++n) {
        const RadarDraw d = simulate_radar(x, geom, sector, scen, rng, PresenceMode::random);
        const DetectorOutput base = maprt(d.y_r, grid, sector);
        const DetectorOutput md = md_detect(ts.a, d.y_r, mask, 0.0, grid.theta_grid);
        const MdEstimate est = md_estimate(ts.a, d.y_r, mask, grid.theta_grid);
        int g_arg = 0;
        for (int i = 1; i < est.g.size(); ++i) {
            if (est.g[i] > est.g[g_arg]) g_arg = i;
        }
        if (grid.theta_grid[g_arg] != base.theta_hat) check_fail("detector argmax differs");
        if (std::abs(md.statistic * md.statistic - base.statistic) >
            1e-9 * std::max(1.0, base.statistic)) {
            check_fail("statistic scale mismatch");
        }
    }
    std::printf("detector equivalence: ok (300 draws)\n");
}

void check_calibration() {
    std::vector<double> s(100);
    for (int i = 0; i < 100; ++i) s[static_cast<size_t>(i)] = i + 1.0;
    if (calibrate_threshold(s, 0.01) != 100.0) check_fail("quantile 1..100 at pfa 0.01");
    const std::vector<double> sym = {-3, -2, -1, 0, 1, 2, 3};
    if (calibrate_threshold(sym, 0.5) != 0.0) check_fail("median quantile");
    std::printf("calibration quantile: ok\n");
}

int cmd_check() {
    check_gradients();
    check_detector_equivalence();
    check_calibration();
    std::printf("all self-tests passed\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ISAC beamforming testbed: baseline, model-driven and autoencoder methods"};
    app.require_subcommand(1);

    std::string config_path;
    std::string method;
    std::string artifact;
    std::string out;
    std::string methods_csv = "baseline,md,nn";
    std::string artifacts_dir;
    int geometry_seeds = 1;
    std::optional<uint64_t> seed_flag;

    auto* simulate = app.add_subcommand("simulate", "Evaluate one operating point, CSV to stdout");
    simulate->add_option("--config", config_path, "Config file")->required();
    simulate->add_option("--seed", seed_flag, "Master seed override (beats ISAC_SEED)");

    auto* train = app.add_subcommand("train", "Train a learned method and save its artifact");
    train->add_option("--method", method, "md | nn")
        ->required()
        ->check(CLI::IsMember({"md", "nn"}));
    train->add_option("--config", config_path, "Config file")->required();
    train->add_option("--out", out, "Artifact output path")->required();

    auto* eval = app.add_subcommand("eval", "Evaluate one operating point to a file");
    eval->add_option("--method", method, "baseline | md | nn")
        ->required()
        ->check(CLI::IsMember({"baseline", "md", "nn"}));
    eval->add_option("--artifact", artifact, "Trained artifact (md/nn)");
    eval->add_option("--config", config_path, "Config file")->required();
    eval->add_option("--out", out, "Output path (.json for JSON, CSV otherwise)")->required();

    auto* sweep = app.add_subcommand("sweep", "Trade-off sweep over the omega_r list");
    sweep->add_option("--methods", methods_csv, "Comma-separated subset of baseline,md,nn");
    sweep->add_option("--config", config_path, "Config file")->required();
    sweep->add_option("--out", out, "Output path (.json for JSON, CSV otherwise)")->required();
    sweep->add_option("--geometry-seeds", geometry_seeds,
                      "Repeat over this many derived geometry realizations");
    sweep->add_option("--artifacts-dir", artifacts_dir,
                      "Cache trained artifacts here (load when present)");

    auto* check = app.add_subcommand("check", "Run gradient and oracle self-tests");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help or the error message
        return code == 0 ? 0 : 1;     // any command-line misuse is a config error
    }

    try {
        if (simulate->parsed()) return cmd_simulate(config_path, seed_flag);
        if (train->parsed()) return cmd_train(method, config_path, out);
        if (eval->parsed()) return cmd_eval(method, artifact, config_path, out);
        if (sweep->parsed()) {
            return cmd_sweep(methods_csv, config_path, out, geometry_seeds, artifacts_dir);
        }
        if (check->parsed()) return cmd_check();
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}

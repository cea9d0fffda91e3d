#include "isac/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace isac {

namespace {

constexpr double kPi = std::numbers::pi;

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// systems

BaselineSystem::BaselineSystem(int k, int n_grid, int m, double e_tx, bool refine)
    : grid_(SteeringGrid::make(k, n_grid)),
      constellation_(Constellation::make_qam(m)),
      e_tx_(e_tx),
      refine_(refine) {}

Eigen::VectorXcd BaselineSystem::precoder(const AngularSector& target_sector,
                                          const AngularSector& comm_sector, double omega_r) {
    const double passband = static_cast<double>(grid_.k());
    const Eigen::VectorXcd x_r =
        ls_beamformer(grid_.a_ideal, desired_beampattern(target_sector, grid_, passband), e_tx_);
    const Eigen::VectorXcd x_c =
        ls_beamformer(grid_.a_ideal, desired_beampattern(comm_sector, grid_, passband), e_tx_);
    return isac_combine(x_r, x_c, omega_r, 0.0, e_tx_);
}

double BaselineSystem::statistic(const RadarDraw& draw, const AngularSector& sector) {
    return maprt(draw.y_r, grid_, sector).statistic;
}

double BaselineSystem::estimate(const RadarDraw& draw, const AngularSector& sector) {
    return maprt(draw.y_r, grid_, sector, std::numeric_limits<double>::infinity(), refine_)
        .theta_hat;
}

std::complex<double> BaselineSystem::encode(int m) { return qam_encode(m, constellation_); }

int BaselineSystem::decode(std::complex<double> y_c, std::complex<double> kappa) {
    return mle_decode(y_c, kappa, constellation_);
}

MdSystem::MdSystem(TrainableSteering ts, int m, double e_tx, MdEstimateOptions opt)
    : ts_(std::move(ts)),
      constellation_(Constellation::make_qam(m)),
      e_tx_(e_tx),
      opt_(opt) {}

const BeamTarget& MdSystem::mask_for(const AngularSector& sector) {
    if (!mask_cache_ || mask_cache_->first.lo != sector.lo || mask_cache_->first.hi != sector.hi) {
        mask_cache_ = {sector, binary_mask(ts_.theta_grid, sector)};
    }
    return mask_cache_->second;
}

Eigen::VectorXcd MdSystem::precoder(const AngularSector& target_sector,
                                    const AngularSector& comm_sector, double omega_r) {
    return md_isac_precoder(ts_, target_sector, comm_sector, omega_r, e_tx_);
}

double MdSystem::statistic(const RadarDraw& draw, const AngularSector& sector) {
    // md_detect's statistic: max of the masked, unsquared magnitudes.
    const BeamTarget& mask = mask_for(sector);
    return (ts_.a.adjoint() * draw.y_r).cwiseAbs().cwiseProduct(mask.b).maxCoeff();
}

double MdSystem::estimate(const RadarDraw& draw, const AngularSector& sector) {
    return md_estimate(ts_.a, draw.y_r, mask_for(sector), ts_.theta_grid, opt_).theta_hat;
}

std::complex<double> MdSystem::encode(int m) { return qam_encode(m, constellation_); }

int MdSystem::decode(std::complex<double> y_c, std::complex<double> kappa) {
    return mle_decode(y_c, kappa, constellation_);
}

NnSystem::NnSystem(AeParams params, double e_tx)
    : ae_(std::move(params)), constellation_(nn_constellation(ae_)), e_tx_(e_tx) {}

Eigen::VectorXcd NnSystem::precoder(const AngularSector& target_sector,
                                    const AngularSector& comm_sector, double /*omega_r*/) {
    return beamformer_forward(ae_.beamformer, target_sector, comm_sector, e_tx_);
}

double NnSystem::statistic(const RadarDraw& draw, const AngularSector& sector) {
    return presence_forward(ae_.presence, draw.y_r, sector);
}

double NnSystem::estimate(const RadarDraw& draw, const AngularSector& sector) {
    return angle_forward(ae_.angle, draw.y_r, sector);
}

std::complex<double> NnSystem::encode(int m) { return qam_encode(m, constellation_); }

int NnSystem::decode(std::complex<double> y_c, std::complex<double> kappa) {
    const Eigen::VectorXd probs = comm_rx_forward(ae_.comm_rx, y_c, kappa);
    int best = 0;
    double best_val = probs[0];
    for (int i = 1; i < probs.size(); ++i) {
        if (probs[i] > best_val) {
            best_val = probs[i];
            best = i;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// calibration and evaluation

double calibrate_threshold(std::vector<double> statistics_h0, double target_pfa) {
    require(target_pfa > 0.0 && target_pfa < 1.0, "calibrate_threshold: pfa must be in (0,1)");
    const auto n = static_cast<double>(statistics_h0.size());
    // The quantile needs n * pfa >= 1 to resolve at all; the stronger 10/pfa
    // resolution requirement is enforced on the experiment config.
    require(n * target_pfa >= 1.0, "calibrate_threshold: insufficient samples");
    std::sort(statistics_h0.begin(), statistics_h0.end());
    const auto idx = static_cast<size_t>(std::ceil((n - 1.0) * (1.0 - target_pfa)));
    return statistics_h0[std::min(idx, statistics_h0.size() - 1)];
}

MetricsRecord evaluate(System& system, const EvalPoint& point, Rng& rng) {
    point.scen.validate();
    require(point.n_cal >= 10.0 / point.target_pfa, "evaluate: n_cal too small for target_pfa");
    require(point.n_eval >= 10.0 / point.target_pfa, "evaluate: n_eval too small for target_pfa");

    const Eigen::VectorXcd v =
        system.precoder(point.target_sector, point.scen.comm_sector, point.omega_r);

    // Dedicated H0 calibration stream, disjoint from evaluation draws.
    Rng cal_rng = rng.derive(0xCA11B8A7Eull);
    std::vector<double> h0;
    h0.reserve(static_cast<size_t>(point.n_cal));
    for (int i = 0; i < point.n_cal; ++i) {
        const RadarDraw d = simulate_radar(v, point.geom_tx, point.geom_rx, point.target_sector,
                                           point.scen, cal_rng, PresenceMode::force_absent);
        h0.push_back(system.statistic(d, point.target_sector));
    }
    const double threshold = calibrate_threshold(std::move(h0), point.target_pfa);

    Rng eval_rng = rng.derive(0xE7A1ull);
    long n_absent = 0;
    long n_present = 0;
    long n_false_alarm = 0;
    long n_miss = 0;
    long n_detect = 0;
    long n_symbol_err = 0;
    double sq_deg_sum = 0.0;
    const int m_count = point.scen.m;

    for (int i = 0; i < point.n_eval; ++i) {
        const RadarDraw rd = simulate_radar(v, point.geom_tx, point.geom_rx, point.target_sector,
                                            point.scen, eval_rng, PresenceMode::random);
        const int msg = static_cast<int>(eval_rng.uniform_index(static_cast<uint64_t>(m_count)));
        const CommDraw cd = simulate_comm(v, system.encode(msg), point.geom_tx,
                                          point.scen.comm_sector, point.scen, eval_rng);

        const bool detected = system.statistic(rd, point.target_sector) > threshold;
        if (rd.t == 1) {
            ++n_present;
            if (detected) {
                ++n_detect;
                const double err =
                    (system.estimate(rd, point.target_sector) - rd.theta) * (180.0 / kPi);
                sq_deg_sum += err * err;
            } else {
                ++n_miss;
            }
        } else {
            ++n_absent;
            if (detected) ++n_false_alarm;
        }
        if (system.decode(cd.y_c, cd.kappa) != msg) ++n_symbol_err;
    }

    MetricsRecord rec;
    rec.method = system.name();
    rec.omega_r = point.omega_r;
    rec.threshold = threshold;
    rec.pfa_emp = n_absent > 0 ? static_cast<double>(n_false_alarm) / n_absent : 0.0;
    rec.pmd = n_present > 0 ? static_cast<double>(n_miss) / n_present : 0.0;
    rec.ser = static_cast<double>(n_symbol_err) / static_cast<double>(point.n_eval);
    if (n_detect > 0) rec.rmse_deg = std::sqrt(sq_deg_sum / static_cast<double>(n_detect));
    rec.n_detect = n_detect;
    rec.n_eval = point.n_eval;
    rec.seed = point.seed_label;
    return rec;
}

// ---------------------------------------------------------------------------
// config-driven orchestration

std::unique_ptr<System> make_system(const std::string& method, const ExperimentConfig& cfg,
                                    const SweepArtifacts& artifacts, double omega_r) {
    if (method == "baseline") {
        return std::make_unique<BaselineSystem>(cfg.k, cfg.baseline_n_grid, cfg.m, cfg.e_tx,
                                                cfg.maprt_refine);
    }
    if (method == "md") {
        require(artifacts.md.has_value(), "missing artifact for method md");
        require(artifacts.md->a.rows() == cfg.k, "md artifact antenna count mismatch");
        MdEstimateOptions opt;
        opt.masked_softmax = cfg.md_masked_softmax;
        opt.temperature = cfg.md_temperature;
        return std::make_unique<MdSystem>(*artifacts.md, cfg.m, cfg.e_tx, opt);
    }
    if (method == "nn") {
        for (const auto& [key, params] : artifacts.nn) {
            if (std::abs(key - omega_r) < 1e-12) {
                require(params.k == cfg.k, "nn artifact antenna count mismatch");
                return std::make_unique<NnSystem>(params, cfg.e_tx);
            }
        }
        throw std::invalid_argument("missing artifact for method nn at omega_r=" +
                                    fmt_double(omega_r));
    }
    throw std::invalid_argument("unknown method '" + method + "'");
}

namespace {

EvalPoint make_point(const ExperimentConfig& cfg, const AngularSector& target, double omega_r) {
    EvalPoint p;
    auto [tx, rx] = cfg.make_geometries();
    p.geom_tx = std::move(tx);
    p.geom_rx = std::move(rx);
    p.scen = cfg.scenario();
    p.target_sector = target;
    p.omega_r = omega_r;
    p.n_cal = cfg.n_cal;
    p.n_eval = cfg.n_eval;
    p.target_pfa = cfg.target_pfa;
    p.seed_label = cfg.seed;
    return p;
}

} // namespace

SweepResult sweep_tradeoff(const ExperimentConfig& cfg, const std::vector<std::string>& methods,
                           const SweepArtifacts& artifacts) {
    cfg.validate();
    require(!methods.empty(), "sweep_tradeoff: no methods given");
    SweepResult result;
    Rng master(cfg.resolved_eval_seed());
    for (size_t mi = 0; mi < methods.size(); ++mi) {
        for (size_t j = 0; j < cfg.omega_r_list.size(); ++j) {
            const double w = cfg.omega_r_list[j];
            auto system = make_system(methods[mi], cfg, artifacts, w);
            const EvalPoint point = make_point(cfg, cfg.target_sector(), w);
            Rng point_rng = master.derive(mi * 8192 + j);
            result.records.push_back(evaluate(*system, point, point_rng));
        }
    }
    return result;
}

std::vector<MetricsRecord> run_generalization(const ExperimentConfig& cfg,
                                              const std::vector<std::string>& methods,
                                              const SweepArtifacts& artifacts) {
    cfg.validate();
    require(!methods.empty(), "run_generalization: no methods given");
    std::vector<MetricsRecord> records;
    Rng master(cfg.resolved_eval_seed());
    for (size_t mi = 0; mi < methods.size(); ++mi) {
        auto system = make_system(methods[mi], cfg, artifacts, cfg.omega_r);
        const EvalPoint point = make_point(cfg, cfg.generalization_sector(), cfg.omega_r);
        Rng point_rng = master.derive(0x6E6E ^ (mi * 8192));
        records.push_back(evaluate(*system, point, point_rng));
    }
    return records;
}

// ---------------------------------------------------------------------------
// export

std::string render_csv(const std::vector<MetricsRecord>& records) {
    require(!records.empty(), "export: empty results");
    std::ostringstream os;
    os << "method,omega_r,threshold,pfa_emp,pmd,ser,rmse_deg,n_detect,n_eval,seed\n";
    for (const MetricsRecord& r : records) {
        os << r.method << ',' << fmt_double(r.omega_r) << ',' << fmt_double(r.threshold) << ','
           << fmt_double(r.pfa_emp) << ',' << fmt_double(r.pmd) << ',' << fmt_double(r.ser) << ','
           << (r.rmse_deg ? fmt_double(*r.rmse_deg) : "nan") << ',' << r.n_detect << ','
           << r.n_eval << ',' << r.seed << '\n';
    }
    return os.str();
}

std::string render_json(const std::vector<MetricsRecord>& records) {
    require(!records.empty(), "export: empty results");
    std::ostringstream os;
    os << "[\n";
    for (size_t i = 0; i < records.size(); ++i) {
        const MetricsRecord& r = records[i];
        os << "  {\"method\": \"" << r.method << "\", \"omega_r\": " << fmt_double(r.omega_r)
           << ", \"threshold\": " << fmt_double(r.threshold)
           << ", \"pfa_emp\": " << fmt_double(r.pfa_emp) << ", \"pmd\": " << fmt_double(r.pmd)
           << ", \"ser\": " << fmt_double(r.ser) << ", \"rmse_deg\": "
           << (r.rmse_deg ? fmt_double(*r.rmse_deg) : "null") << ", \"n_detect\": " << r.n_detect
           << ", \"n_eval\": " << r.n_eval << ", \"seed\": " << r.seed << "}"
           << (i + 1 < records.size() ? "," : "") << "\n";
    }
    os << "]\n";
    return os.str();
}

void export_results(const std::vector<MetricsRecord>& records, const std::string& path,
                    ExportFormat format) {
    const std::string body = format == ExportFormat::csv ? render_csv(records)
                                                         : render_json(records);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("export: cannot open " + path + ": " + std::strerror(errno));
    os << body;
    os.flush();
    if (!os) throw std::runtime_error("export: write failed for " + path + ": " +
                                      std::strerror(errno));
}

} // namespace isac

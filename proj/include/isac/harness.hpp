#ifndef ISAC_HARNESS_HPP
#define ISAC_HARNESS_HPP

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "isac/baseline.hpp"
#include "isac/mdlearn.hpp"
#include "isac/nnlearn.hpp"
#include "isac/rng.hpp"
#include "isac/scenario.hpp"

namespace isac {

/// Everything an evaluated method must provide. The detector and estimator
/// receive the full draw for oracle-testing purposes; real systems read only
/// draw.y_r and the sector.
class System {
public:
    virtual ~System() = default;
    virtual std::string name() const = 0;
    virtual Eigen::VectorXcd precoder(const AngularSector& target_sector,
                                      const AngularSector& comm_sector, double omega_r) = 0;
    virtual double statistic(const RadarDraw& draw, const AngularSector& sector) = 0;
    /// Angle estimate in radians.
    virtual double estimate(const RadarDraw& draw, const AngularSector& sector) = 0;
    virtual std::complex<double> encode(int m) = 0;
    virtual int decode(std::complex<double> y_c, std::complex<double> kappa) = 0;
};

/// LS beam synthesis + MAPRT + QPSK/MLE.
class BaselineSystem : public System {
public:
    BaselineSystem(int k, int n_grid, int m, double e_tx, bool refine = false);

    std::string name() const override { return "baseline"; }
    Eigen::VectorXcd precoder(const AngularSector& target_sector,
                              const AngularSector& comm_sector, double omega_r) override;
    double statistic(const RadarDraw& draw, const AngularSector& sector) override;
    double estimate(const RadarDraw& draw, const AngularSector& sector) override;
    std::complex<double> encode(int m) override;
    int decode(std::complex<double> y_c, std::complex<double> kappa) override;

    const SteeringGrid& grid() const { return grid_; }

private:
    SteeringGrid grid_;
    Constellation constellation_;
    double e_tx_;
    bool refine_;
};

/// Trained steering matrix + masked softmax receiver; comm side is the same
/// QPSK/MLE as the baseline.
class MdSystem : public System {
public:
    MdSystem(TrainableSteering ts, int m, double e_tx, MdEstimateOptions opt = {});

    std::string name() const override { return "md"; }
    Eigen::VectorXcd precoder(const AngularSector& target_sector,
                              const AngularSector& comm_sector, double omega_r) override;
    double statistic(const RadarDraw& draw, const AngularSector& sector) override;
    double estimate(const RadarDraw& draw, const AngularSector& sector) override;
    std::complex<double> encode(int m) override;
    int decode(std::complex<double> y_c, std::complex<double> kappa) override;

    const TrainableSteering& steering() const { return ts_; }

private:
    const BeamTarget& mask_for(const AngularSector& sector);

    TrainableSteering ts_;
    Constellation constellation_;
    double e_tx_;
    MdEstimateOptions opt_;
    std::optional<std::pair<AngularSector, BeamTarget>> mask_cache_;
};

/// Five trained networks; the artifact embodies its omega_r, so the precoder
/// ignores the omega_r argument. The detection statistic is the presence
/// probability, thresholded like any other statistic.
class NnSystem : public System {
public:
    NnSystem(AeParams params, double e_tx);

    std::string name() const override { return "nn"; }
    Eigen::VectorXcd precoder(const AngularSector& target_sector,
                              const AngularSector& comm_sector, double omega_r) override;
    double statistic(const RadarDraw& draw, const AngularSector& sector) override;
    double estimate(const RadarDraw& draw, const AngularSector& sector) override;
    std::complex<double> encode(int m) override;
    int decode(std::complex<double> y_c, std::complex<double> kappa) override;

    const AeParams& params() const { return ae_; }

private:
    AeParams ae_;
    Constellation constellation_;
    double e_tx_;
};

struct MetricsRecord {
    std::string method;
    double omega_r = 0.0;
    double threshold = 0.0;
    double pfa_emp = 0.0;
    double pmd = 0.0;
    double ser = 0.0;
    std::optional<double> rmse_deg; // absent when no t=1 draw was detected
    long n_detect = 0;
    long n_eval = 0;
    uint64_t seed = 0;
};

struct SweepResult {
    std::vector<MetricsRecord> records; // method-major, omega_r increasing
};

/// Threshold = empirical (1 - pfa) quantile with "higher" interpolation:
/// sorted ascending, index ceil((n-1) (1 - pfa)).
double calibrate_threshold(std::vector<double> statistics_h0, double target_pfa);

/// One operating point of one method.
struct EvalPoint {
    UlaGeometry geom_tx;
    UlaGeometry geom_rx;
    ScenarioConfig scen;
    AngularSector target_sector;
    double omega_r = 0.0;
    int n_cal = 100000;
    int n_eval = 200000;
    double target_pfa = 0.01;
    uint64_t seed_label = 0; // recorded in the output row
};

/// Calibrates on dedicated H0 draws (a derived substream), then streams
/// n_eval joint draws: P_md over t=1 draws, SER over all draws, RMSE in
/// degrees over detected t=1 draws only.
MetricsRecord evaluate(System& system, const EvalPoint& point, Rng& rng);

/// Experiment configuration, file-format mirror (INI-style sections).
struct ExperimentConfig {
    // [scenario]
    int k = 16;
    double e_tx = 1.0;
    double n0 = 1.0;
    double sigma_r2 = 1.0;
    double sigma_c2 = 100.0;
    int m = 4;
    bool impaired = false;
    bool impair_rx = true;
    double sigma_lambda = 1.0 / 30.0; // wavelengths
    double comm_lo_deg = 30.0;
    double comm_hi_deg = 50.0;
    double target_lo_deg = -40.0;
    double target_hi_deg = -20.0;

    // [train]
    int md_iterations = 5000;
    int md_batch = 1024;
    int md_n_grid = 156;
    double md_lr = 1e-3;
    double md_init_noise_std = 0.1;
    bool md_masked_softmax = false;
    double md_temperature = 1.0;
    int nn_iterations_per_phase = 2500;
    int nn_batch = 1024;
    int nn_width = 21;
    double nn_lr = 1e-3;
    double nn_omega_r = 0.4;
    bool nn_bce_all_samples = true;

    // [eval]
    int n_eval = 200000;
    int n_cal = 100000;
    double target_pfa = 0.01;
    double omega_r = 0.4; // single-point commands (simulate/eval/generalization)
    std::vector<double> omega_r_list = {0.0,  1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.05,
                                        0.1,  0.15, 0.4,  0.6,  0.8,  1.0};
    int baseline_n_grid = 500;
    bool maprt_refine = false;
    std::string method = "baseline"; // simulate default
    std::string artifact;            // simulate artifact path for md/nn
    double gen_lo_deg = -20.0;
    double gen_hi_deg = 20.0;
    uint64_t seed = 12345;
    std::optional<uint64_t> geometry_seed;
    std::optional<uint64_t> train_seed;
    std::optional<uint64_t> eval_seed;

    ScenarioConfig scenario() const;
    AngularSector target_sector() const;
    AngularSector comm_sector() const;
    AngularSector generalization_sector() const;
    uint64_t resolved_geometry_seed() const;
    uint64_t resolved_train_seed() const;
    uint64_t resolved_eval_seed() const;
    /// tx and rx geometries; when both are impaired they are the SAME
    /// realization (one physical monostatic array).
    std::pair<UlaGeometry, UlaGeometry> make_geometries() const;

    void validate() const;
};

/// Parses the INI-style config: sections [scenario], [train], [eval]; keys
/// mirror the field names above; unknown sections or keys are errors. If the
/// ISAC_SEED environment variable is set it overrides the master seed.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text); // same, from memory

/// Trained artifacts for the learned methods; sweep does not train.
struct SweepArtifacts {
    std::optional<TrainableSteering> md;
    std::map<double, AeParams> nn; // keyed by omega_r
};

/// One MetricsRecord per (method, omega_r); calibration re-runs per point.
/// Learned methods require their artifacts ("missing artifact" otherwise);
/// the MD artifact is a single training reused across every omega_r.
SweepResult sweep_tradeoff(const ExperimentConfig& cfg, const std::vector<std::string>& methods,
                           const SweepArtifacts& artifacts);

/// Evaluates the requested methods on the unseen generalization sector at the
/// single-point omega_r, without retraining.
std::vector<MetricsRecord> run_generalization(const ExperimentConfig& cfg,
                                               const std::vector<std::string>& methods,
                                               const SweepArtifacts& artifacts);

enum class ExportFormat { csv, json };

/// CSV header: method,omega_r,threshold,pfa_emp,pmd,ser,rmse_deg,n_detect,n_eval,seed
/// Floats use 17 significant digits; absent RMSE exports as "nan" (CSV) or
/// null (JSON).
void export_results(const std::vector<MetricsRecord>& records, const std::string& path,
                    ExportFormat format);
std::string render_csv(const std::vector<MetricsRecord>& records);
std::string render_json(const std::vector<MetricsRecord>& records);

/// Factory for the three method systems. md/nn require their artifact.
std::unique_ptr<System> make_system(const std::string& method, const ExperimentConfig& cfg,
                                    const SweepArtifacts& artifacts, double omega_r);

} // namespace isac

#endif

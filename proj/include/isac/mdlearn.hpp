#ifndef ISAC_MDLEARN_HPP
#define ISAC_MDLEARN_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "isac/baseline.hpp"
#include "isac/gradtape.hpp"
#include "isac/rng.hpp"
#include "isac/scenario.hpp"

namespace isac {

/// One trainable complex matrix shared between the LS-style transmitter and
/// the matched-filter-style receiver.
struct TrainableSteering {
    Eigen::MatrixXcd a;        // K x N_grid
    Eigen::VectorXd theta_grid;
};

/// Receiver-side soft estimation options. The literal mode multiplies the
/// statistic by the binary mask before the softmax, so masked bins still
/// contribute e^0 to the partition; masked_softmax removes that leakage by
/// pushing out-of-sector logits to -1e9.
struct MdEstimateOptions {
    bool masked_softmax = false;
    double temperature = 1.0;
};

struct MdTrainConfig {
    int iterations = 5000;
    int batch_size = 1024;
    double lr = 1e-3;
    int n_grid = 156;
    double init_noise_std = 0.1;
    MdEstimateOptions estimate;
};

struct MdTrainResult {
    TrainableSteering steering;
    std::vector<double> loss_history; // mean squared degrees error per iteration
};

struct MdEstimate {
    Eigen::VectorXd g; // probability vector over the grid
    double theta_hat = 0.0;
};

/// Binary in-sector mask over the grid angles (inclusive bounds).
BeamTarget binary_mask(const Eigen::VectorXd& theta_grid, const AngularSector& sector);

/// A = A_ideal + perturbation; real and imaginary parts get independent
/// N(0, noise_std^2 / 2) so the mean squared entry error is noise_std^2.
TrainableSteering init_steering(const SteeringGrid& grid, double noise_std, Rng& rng);

/// x = (A*A^T + eps I)^-1 A* b normalized to ||x||^2 = e_tx, with the
/// ls_beamformer ridge eps = 1e-8 trace(A*A^T)/K. Solved through the same
/// real block embedding as the differentiable path: identical system and
/// ridge, so the two agree to machine rounding.
Eigen::VectorXcd md_precoder(const Eigen::MatrixXcd& a, const BeamTarget& b, double e_tx);

/// g = softmax(|A^H y_r| .* b), theta_hat = g^T theta_grid.
MdEstimate md_estimate(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& y_r,
                       const BeamTarget& mask, const Eigen::VectorXd& theta_grid,
                       const MdEstimateOptions& opt = {});

/// statistic = max(|A^H y_r| .* b) (unsquared), theta_hat from md_estimate.
DetectorOutput md_detect(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& y_r,
                         const BeamTarget& mask, double threshold,
                         const Eigen::VectorXd& theta_grid, const MdEstimateOptions& opt = {});

/// v = isac_combine(md_precoder(target mask), md_precoder(comm mask),
/// rho = omega_r, phi = 0).
Eigen::VectorXcd md_isac_precoder(const TrainableSteering& ts, const AngularSector& target_sector,
                                  const AngularSector& comm_sector, double omega_r, double e_tx);

/// Trains A solely for single-target sensing (presence forced on) with the
/// mean squared degrees error; the sector is resampled every iteration.
MdTrainResult train_md(const MdTrainConfig& cfg, const UlaGeometry& geom_tx,
                       const UlaGeometry& geom_rx, const ScenarioConfig& scen, Rng& rng);

// Differentiable builders used by train_md; the plain functions above mirror
// them exactly (tested for equivalence).
gt::CVar md_precoder_t(gt::Tape& t, gt::CVar a, const Eigen::VectorXd& mask, double e_tx);
gt::Id md_estimate_batch_t(gt::Tape& t, gt::CVar a, gt::CVar y_r_batch,
                           const Eigen::VectorXd& mask, const Eigen::VectorXd& theta_grid,
                           const MdEstimateOptions& opt); // n x 1 theta_hat, radians

/// Binary artifact: "MDAS", version, K, N_grid (LE u32), then K*N_grid
/// interleaved (re, im) LE doubles, row-major over K.
void save_mdas(const std::string& path, const TrainableSteering& ts);
TrainableSteering load_mdas(const std::string& path);

} // namespace isac

#endif

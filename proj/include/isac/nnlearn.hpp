#ifndef ISAC_NNLEARN_HPP
#define ISAC_NNLEARN_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "isac/baseline.hpp"
#include "isac/gradtape.hpp"
#include "isac/rng.hpp"
#include "isac/scenario.hpp"

namespace isac {

enum class HiddenAct { relu };
enum class OutAct { linear, sigmoid, tanh, softmax };

/// Layer widths from input to output, plus activation tags.
struct MlpSpec {
    std::vector<int> widths; // input, hidden..., output
    HiddenAct hidden = HiddenAct::relu;
    OutAct out = OutAct::linear;

    void validate() const; // >= 1 hidden layer, positive widths
};

/// Weights are (out x in), biases (1 x out).
struct MlpParams {
    MlpSpec spec;
    std::vector<gt::Tensor> w;
    std::vector<gt::Tensor> b;
};

/// The five networks of the autoencoder:
///   encoder   |M| -> (K, K, 2K) -> 2 linear, read as (Re s, Im s)
///   beamformer  4 -> (N, N, N) -> 2K linear, read as K complex entries
///   presence 2K+2 -> (N, N, N) -> 1 sigmoid
///   angle    2K+2 -> (N, N, N) -> 1 tanh, scaled by pi/2
///   comm rx     4 -> (K, 2K, 2K) -> |M| softmax
struct AeParams {
    int k = 0;
    int m = 0;
    int width = 0; // hidden width N
    double omega_r = 0.0;
    MlpParams encoder;
    MlpParams beamformer;
    MlpParams presence;
    MlpParams angle;
    MlpParams comm_rx;
};

struct NnTrainConfig {
    double omega_r = 0.4;
    int width = 21;
    int iterations_per_phase = 2500;
    int batch_size = 1024;
    double lr = 1e-3;
    /// Phase-1 detection loss over all samples (default) rather than only the
    /// literal t=1 draws; a detector never shown noise-only draws cannot
    /// learn the absent hypothesis.
    bool bce_all_samples = true;
};

struct NnTrainResult {
    AeParams params;
    std::vector<double> loss_history_phase1;
    std::vector<double> loss_history_phase2;
};

/// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
MlpParams init_mlp(const MlpSpec& spec, Rng& rng);

/// Plain forward pass through one MLP (row-vector in, row-vector out).
Eigen::RowVectorXd mlp_apply(const MlpParams& p, const Eigen::RowVectorXd& x);

/// Raw encoder output for message m; no batch normalization applied.
std::complex<double> encoder_forward(const MlpParams& enc, int m, int m_count);

/// All |M| encoder outputs normalized to unit average energy. This is the
/// infinite-batch limit of the training-time batch normalization.
Constellation nn_constellation(const AeParams& p);

/// Angle features are radians scaled by 2/pi; input order is
/// (target lo, target hi, comm lo, comm hi). Output normalized to
/// ||v||^2 = e_tx.
Eigen::VectorXcd beamformer_forward(const MlpParams& bf, const AngularSector& target_sector,
                                    const AngularSector& comm_sector, double e_tx);

double presence_forward(const MlpParams& pr, const Eigen::VectorXcd& y_r,
                        const AngularSector& sector);

double angle_forward(const MlpParams& an, const Eigen::VectorXcd& y_r,
                     const AngularSector& sector);

Eigen::VectorXd comm_rx_forward(const MlpParams& rx, std::complex<double> y_c,
                                std::complex<double> kappa);

// Losses; probabilities are clamped at 1e-12 before the log.
double bce(double t, double p_hat);
double mse_deg(double theta_hat_rad, double theta_rad);
double cce(int m_true, const Eigen::VectorXd& probs);

/// Two-step training: phase 1 trains encoder/beamformer/presence/comm-rx with
/// omega_r * J_detect + (1 - omega_r) * J_comm; phase 2 trains the angle head
/// and updates encoder/beamformer/comm-rx with omega_r * J_angle (t=1 only)
/// + (1 - omega_r) * J_comm. The presence head is frozen in phase 2.
NnTrainResult train_nn(const NnTrainConfig& cfg, const UlaGeometry& geom_tx,
                       const UlaGeometry& geom_rx, const ScenarioConfig& scen, Rng& rng);

/// Differentiable batch forward through one MLP; params are (w, b) node
/// pairs, x is batch x input.
gt::Id mlp_forward_t(gt::Tape& t, const MlpSpec& spec,
                     const std::vector<std::pair<gt::Id, gt::Id>>& params, gt::Id x);

/// Binary artifact: "NNAE", version, K, M, N (LE u32), omega_r (LE f64),
/// tensor count, then each tensor as rows, cols (u32) + row-major f64; fixed
/// network order encoder, beamformer, presence, angle, comm rx (W then b per
/// layer).
void save_nnae(const std::string& path, const AeParams& p);
AeParams load_nnae(const std::string& path);

} // namespace isac

#endif

#ifndef ISAC_SCENARIO_HPP
#define ISAC_SCENARIO_HPP

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "isac/rng.hpp"

namespace isac {

/// Uniform (possibly perturbed) linear array. Lengths are in units of the
/// wavelength; the canonical wavelength is 1.
struct UlaGeometry {
    int k = 0;                 // antenna count, >= 2
    std::vector<double> gaps;  // k-1 spacings between consecutive elements
    double wavelength = 1.0;

    /// Ideal half-wavelength array.
    static UlaGeometry ideal(int k, double wavelength = 1.0);

    /// Element positions as cumulative sums of the gaps, re-centered to zero
    /// mean so the ideal case reduces to (k - (K-1)/2) * lambda/2.
    std::vector<double> positions() const;

    bool is_ideal(double tol = 0.0) const;
};

/// Closed angular interval in radians, inside [-pi/2, pi/2].
struct AngularSector {
    double lo = 0.0;
    double hi = 0.0;

    AngularSector() = default;
    AngularSector(double lo, double hi);

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double theta) const { return theta >= lo && theta <= hi; }

    static AngularSector from_degrees(double lo_deg, double hi_deg);
};

/// Energy, noise and channel statistics shared by both links.
struct ScenarioConfig {
    double e_tx = 1.0;       // transmit energy budget
    double n0 = 1.0;         // noise power
    double sigma_r2 = 1.0;   // radar channel power (SNR_r = sigma_r2 / n0)
    double sigma_c2 = 100.0; // comm channel power (SNR_c = sigma_c2 / n0)
    int m = 4;               // constellation size
    AngularSector comm_sector = AngularSector::from_degrees(30.0, 50.0);
    AngularSector target_prior = AngularSector::from_degrees(-40.0, -20.0);

    double snr_r() const { return sigma_r2 / n0; }
    double snr_c() const { return sigma_c2 / n0; }

    void validate() const; // throws std::invalid_argument
};

/// One draw of the radar channel: y_r = alpha a_rx(theta) a_tx(theta)^T x + n
/// when a target is present, otherwise just the noise.
struct RadarDraw {
    int t = 0;                          // presence bit
    double theta = 0.0;                 // AoA, defined iff t == 1
    std::complex<double> alpha{0.0};    // Swerling-1 gain, defined iff t == 1
    Eigen::VectorXcd noise;
    Eigen::VectorXcd y_r;
};

/// One draw of the MISO comm channel: y_c = kappa s + n with
/// kappa = beta a_tx(vartheta)^T v.
struct CommDraw {
    double vartheta = 0.0;
    std::complex<double> beta{0.0};
    std::complex<double> noise{0.0};
    std::complex<double> kappa{0.0};
    std::complex<double> y_c{0.0};
};

/// Channel parameters for one Monte-Carlo batch, kept unreduced so a trainer
/// can recompose the received signals around a differentiable precoder.
struct EpisodeBatch {
    // radar side
    Eigen::VectorXi t;
    Eigen::VectorXd theta;
    Eigen::VectorXcd alpha;
    Eigen::MatrixXcd noise_r;  // n x K
    // comm side
    std::vector<int> message;
    Eigen::VectorXd vartheta;
    Eigen::VectorXcd beta;
    Eigen::VectorXcd noise_c;
    // received signals (filled once the transmitted signal is known)
    Eigen::MatrixXcd y_r;      // n x K
    Eigen::VectorXcd kappa;
    Eigen::VectorXcd y_c;
};

/// Steering vector a(theta): entry k is exp(-j 2 pi p_k sin(theta) / lambda)
/// with p_k the (re-centered) element position.
Eigen::VectorXcd steering_vector(const UlaGeometry& geom, double theta);

/// Steering matrix evaluated at a list of angles, one column per angle.
Eigen::MatrixXcd steering_matrix(const UlaGeometry& geom, const Eigen::VectorXd& angles);

/// Hardware impairment of §-style spacing errors: gaps drawn i.i.d. from
/// N(lambda/2, sigma_lambda^2); non-positive draws are redrawn, which is a
/// probability ~0 event at the canonical sigma_lambda = lambda/30.
UlaGeometry perturb_geometry(int k, double sigma_lambda, Rng& rng, double wavelength = 1.0);

/// Randomized training sector: mean ~ U[-60 deg, 60 deg], span ~ U[10 deg, 20 deg].
AngularSector sample_target_sector(Rng& rng);

/// Presence forcing for the radar simulator.
enum class PresenceMode { random, force_absent, force_present };

/// Simulate the radar return for transmit signal x. Throws on NaN input.
RadarDraw simulate_radar(const Eigen::VectorXcd& x, const UlaGeometry& geom,
                         const AngularSector& sector, const ScenarioConfig& cfg, Rng& rng,
                         PresenceMode presence = PresenceMode::random);

/// Monostatic variant with distinct tx/rx geometries (rx may be ideal while
/// tx is impaired); the single-geometry overload is the geom_tx == geom_rx
/// case.
RadarDraw simulate_radar(const Eigen::VectorXcd& x, const UlaGeometry& geom_tx,
                         const UlaGeometry& geom_rx, const AngularSector& sector,
                         const ScenarioConfig& cfg, Rng& rng,
                         PresenceMode presence = PresenceMode::random);

/// Simulate the comm link for precoder v carrying symbol s. Throws on NaN input.
CommDraw simulate_comm(const Eigen::VectorXcd& v, std::complex<double> s,
                       const UlaGeometry& geom, const AngularSector& sector,
                       const ScenarioConfig& cfg, Rng& rng);

/// Draw the channel parameters (received signals left empty) for n joint episodes.
EpisodeBatch sample_episode_batch(int n, int k, const AngularSector& target_sector,
                                  const AngularSector& comm_sector, const ScenarioConfig& cfg,
                                  Rng& rng, PresenceMode presence = PresenceMode::random);

} // namespace isac

#endif

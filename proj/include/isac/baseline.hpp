#ifndef ISAC_BASELINE_HPP
#define ISAC_BASELINE_HPP

#include <Eigen/Dense>
#include <complex>
#include <limits>
#include <vector>

#include "isac/scenario.hpp"

namespace isac {

/// Uniform angular grid over [-pi/2, pi/2] with the ideal steering matrix
/// evaluated at every grid angle (one column per angle).
struct SteeringGrid {
    Eigen::VectorXd theta_grid;
    Eigen::MatrixXcd a_ideal; // K x N_grid

    static SteeringGrid make(int k, int n_grid);

    int k() const { return static_cast<int>(a_ideal.rows()); }
    int n_grid() const { return static_cast<int>(theta_grid.size()); }
    double step() const { return theta_grid[1] - theta_grid[0]; }

    /// Indices of grid angles inside the (inclusive) sector.
    std::vector<int> indices_in(const AngularSector& sector) const;
};

/// Desired beampattern sampled on the grid.
struct BeamTarget {
    Eigen::VectorXd b;
};

/// Gray-coded square QAM (or BPSK) with unit average symbol energy.
struct Constellation {
    Eigen::VectorXcd points;

    static Constellation make_qam(int m);

    int size() const { return static_cast<int>(points.size()); }
};

struct DetectorOutput {
    double statistic = 0.0;
    double theta_hat = 0.0;
    int decision = 0;
};

/// [b]_i = passband_value if theta_i in sector else 0.
BeamTarget desired_beampattern(const AngularSector& sector, const SteeringGrid& grid,
                               double passband_value);

/// LS beampattern synthesis x = (A*A^T)^-1 A* b with a small Tikhonov ridge
/// eps = 1e-8 trace(A*A^T)/K, normalized to ||x||^2 = e_tx.
Eigen::VectorXcd ls_beamformer(const Eigen::MatrixXcd& a, const BeamTarget& target, double e_tx);

/// Trade-off combiner v = sqrt(E_tx) (sqrt(rho) x_r + sqrt(1-rho) e^{j phi} x_c) / ||.||.
Eigen::VectorXcd isac_combine(const Eigen::VectorXcd& x_r, const Eigen::VectorXcd& x_c,
                              double rho, double phi, double e_tx);

/// Matched-filter detector/estimator over the in-sector grid angles:
/// statistic = max_i |a_ideal(theta_i)^H y_r|^2, theta_hat the maximizer
/// (ties toward smaller index), decision = statistic > threshold.
/// `refine` enables parabolic interpolation of theta_hat around the peak.
DetectorOutput maprt(const Eigen::VectorXcd& y_r, const SteeringGrid& grid,
                     const AngularSector& sector,
                     double threshold = std::numeric_limits<double>::infinity(),
                     bool refine = false);

std::complex<double> qam_encode(int m, const Constellation& c);

/// argmin_m |y_c - kappa s(m)|^2, ties toward smaller index.
int mle_decode(std::complex<double> y_c, std::complex<double> kappa, const Constellation& c);

} // namespace isac

#endif

#include "isac/baseline.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace isac {

namespace {

constexpr double kPi = std::numbers::pi;

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

// Gray code to binary: cascade of XORs from the top bit down.
unsigned gray_to_binary(unsigned g) {
    unsigned b = g;
    while (g >>= 1u) b ^= g;
    return b;
}

} // namespace

SteeringGrid SteeringGrid::make(int k, int n_grid) {
    require(k >= 2, "SteeringGrid: k must be >= 2");
    require(n_grid >= k, "SteeringGrid: n_grid must be >= k");
    SteeringGrid g;
    g.theta_grid.resize(n_grid);
    const double step = kPi / static_cast<double>(n_grid - 1);
    for (int i = 0; i < n_grid; ++i) g.theta_grid[i] = -kPi / 2 + step * i;
    g.a_ideal = steering_matrix(UlaGeometry::ideal(k), g.theta_grid);
    return g;
}

std::vector<int> SteeringGrid::indices_in(const AngularSector& sector) const {
    std::vector<int> idx;
    for (int i = 0; i < n_grid(); ++i) {
        if (sector.contains(theta_grid[i])) idx.push_back(i);
    }
    return idx;
}

BeamTarget desired_beampattern(const AngularSector& sector, const SteeringGrid& grid,
                               double passband_value) {
    BeamTarget t;
    t.b = Eigen::VectorXd::Zero(grid.n_grid());
    bool any = false;
    for (int i = 0; i < grid.n_grid(); ++i) {
        if (sector.contains(grid.theta_grid[i])) {
            t.b[i] = passband_value;
            any = true;
        }
    }
    if (!any) throw std::invalid_argument("sector unresolvable at this grid");
    return t;
}

Eigen::VectorXcd ls_beamformer(const Eigen::MatrixXcd& a, const BeamTarget& target, double e_tx) {
    require(a.rows() >= 2, "ls_beamformer: a must have >= 2 rows");
    require(a.cols() == target.b.size(), "ls_beamformer: a and b dimensions mismatch");
    require(e_tx > 0.0, "ls_beamformer: e_tx must be positive");
    if (target.b.cwiseAbs().maxCoeff() == 0.0) throw std::invalid_argument("empty target");

    const Eigen::Index k = a.rows();
    Eigen::MatrixXcd s = a.conjugate() * a.transpose();
    const double ridge = 1e-8 * s.trace().real() / static_cast<double>(k);
    s.diagonal().array() += ridge;

    // The ridge handles rank deficiency; a pathological matrix still trips
    // this conditioning gate.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(s, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    if (!(lmin > 0.0) || lmax / lmin > 1e14) {
        std::ostringstream msg;
        msg << "ls_beamformer: singular normal matrix, condition estimate "
            << (lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity());
        throw std::runtime_error(msg.str());
    }

    const Eigen::VectorXcd rhs = a.conjugate() * target.b.cast<std::complex<double>>();
    Eigen::VectorXcd x = s.partialPivLu().solve(rhs);
    const double norm = x.norm();
    if (norm < 1e-12) throw std::runtime_error("ls_beamformer: zero solution");
    return x * (std::sqrt(e_tx) / norm);
}

Eigen::VectorXcd isac_combine(const Eigen::VectorXcd& x_r, const Eigen::VectorXcd& x_c,
                              double rho, double phi, double e_tx) {
    require(x_r.size() == x_c.size(), "isac_combine: size mismatch");
    require(rho >= 0.0 && rho <= 1.0, "isac_combine: rho must be in [0,1]");
    require(e_tx > 0.0, "isac_combine: e_tx must be positive");
    const std::complex<double> rot(std::cos(phi), std::sin(phi));
    Eigen::VectorXcd v = std::sqrt(rho) * x_r + std::sqrt(1.0 - rho) * rot * x_c;
    const double norm = v.norm();
    if (norm < 1e-12) throw std::runtime_error("destructive combination");
    return v * (std::sqrt(e_tx) / norm);
}

DetectorOutput maprt(const Eigen::VectorXcd& y_r, const SteeringGrid& grid,
                     const AngularSector& sector, double threshold, bool refine) {
    require(y_r.size() == grid.k(), "maprt: y_r must have K entries");
    const std::vector<int> idx = grid.indices_in(sector);
    require(!idx.empty(), "maprt: no grid angle inside sector");

    DetectorOutput out;
    int best = idx.front();
    double best_val = -1.0;
    for (int i : idx) {
        const std::complex<double> z = grid.a_ideal.col(i).adjoint() * y_r;
        const double val = std::norm(z);
        if (val > best_val) {
            best_val = val;
            best = i;
        }
    }
    out.statistic = best_val;
    out.theta_hat = grid.theta_grid[best];
    if (refine && best > idx.front() && best < idx.back()) {
        const auto stat_at = [&](int i) {
            return std::norm(std::complex<double>(grid.a_ideal.col(i).adjoint() * y_r));
        };
        const double sl = stat_at(best - 1);
        const double sc = best_val;
        const double sr = stat_at(best + 1);
        const double denom = sl - 2.0 * sc + sr;
        if (denom < 0.0) {
            double delta = 0.5 * (sl - sr) / denom;
            delta = std::clamp(delta, -0.5, 0.5);
            out.theta_hat = std::clamp(grid.theta_grid[best] + delta * grid.step(),
                                       sector.lo, sector.hi);
        }
    }
    out.decision = out.statistic > threshold ? 1 : 0;
    return out;
}

Constellation Constellation::make_qam(int m) {
    require(m >= 2, "Constellation: m must be >= 2");
    Constellation c;
    c.points.resize(m);
    if (m == 2) {
        c.points[0] = std::complex<double>(1.0, 0.0);
        c.points[1] = std::complex<double>(-1.0, 0.0);
        return c;
    }
    int mm = m;
    int q2 = 0; // log2(m)
    while (mm > 1) {
        require(mm % 2 == 0, "Constellation: m must be 2 or a power of 4");
        mm /= 2;
        ++q2;
    }
    require(q2 % 2 == 0, "Constellation: m must be 2 or a power of 4");
    const int qa = q2 / 2;          // bits per axis
    const int l = 1 << qa;          // levels per axis
    const double delta = std::sqrt(3.0 / (2.0 * (m - 1)));
    for (int msg = 0; msg < m; ++msg) {
        // high bits drive the in-phase axis, low bits the quadrature axis;
        // each axis is Gray-labeled so neighbors differ in one bit
        const unsigned gi = static_cast<unsigned>(msg) >> qa;
        const unsigned gq = static_cast<unsigned>(msg) & static_cast<unsigned>(l - 1);
        const unsigned ui = gray_to_binary(gi);
        const unsigned uq = gray_to_binary(gq);
        const double si = (static_cast<double>(l - 1) - 2.0 * ui) * delta;
        const double sq = (static_cast<double>(l - 1) - 2.0 * uq) * delta;
        c.points[msg] = std::complex<double>(si, sq);
    }
    return c;
}

std::complex<double> qam_encode(int m, const Constellation& c) {
    require(m >= 0 && m < c.size(), "qam_encode: message index out of range");
    return c.points[m];
}

int mle_decode(std::complex<double> y_c, std::complex<double> kappa, const Constellation& c) {
    require(std::isfinite(kappa.real()) && std::isfinite(kappa.imag()),
            "mle_decode: kappa must be finite");
    int best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (int m = 0; m < c.size(); ++m) {
        const double val = std::norm(y_c - kappa * c.points[m]);
        if (val < best_val) {
            best_val = val;
            best = m;
        }
    }
    return best;
}

} // namespace isac

#include "isac/scenario.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace isac {

namespace {

constexpr double kPi = std::numbers::pi;

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

bool has_nan(const Eigen::VectorXcd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isnan(v[i].real()) || std::isnan(v[i].imag())) return true;
    }
    return false;
}

} // namespace

UlaGeometry UlaGeometry::ideal(int k, double wavelength) {
    require(k >= 2, "UlaGeometry: k must be >= 2");
    require(wavelength > 0.0, "UlaGeometry: wavelength must be positive");
    UlaGeometry g;
    g.k = k;
    g.wavelength = wavelength;
    g.gaps.assign(static_cast<size_t>(k - 1), 0.5 * wavelength);
    return g;
}

std::vector<double> UlaGeometry::positions() const {
    require(k >= 2, "UlaGeometry: k must be >= 2");
    require(static_cast<int>(gaps.size()) == k - 1, "UlaGeometry: need k-1 gaps");
    std::vector<double> p(static_cast<size_t>(k), 0.0);
    for (int i = 1; i < k; ++i) {
        const double gap = gaps[static_cast<size_t>(i - 1)];
        require(gap > 0.0, "UlaGeometry: gaps must be positive");
        p[static_cast<size_t>(i)] = p[static_cast<size_t>(i - 1)] + gap;
    }
    double mean = 0.0;
    for (double v : p) mean += v;
    mean /= static_cast<double>(k);
    for (double& v : p) v -= mean;
    return p;
}

bool UlaGeometry::is_ideal(double tol) const {
    for (double g : gaps) {
        if (std::abs(g - 0.5 * wavelength) > tol) return false;
    }
    return true;
}

AngularSector::AngularSector(double lo_, double hi_) : lo(lo_), hi(hi_) {
    require(lo <= hi, "AngularSector: lo must be <= hi");
    require(lo >= -kPi / 2 && hi <= kPi / 2, "AngularSector: must lie inside [-pi/2, pi/2]");
}

AngularSector AngularSector::from_degrees(double lo_deg, double hi_deg) {
    return AngularSector(lo_deg * kPi / 180.0, hi_deg * kPi / 180.0);
}

void ScenarioConfig::validate() const {
    require(e_tx > 0.0, "ScenarioConfig: e_tx must be positive");
    require(n0 > 0.0, "ScenarioConfig: n0 must be positive");
    require(sigma_r2 > 0.0, "ScenarioConfig: sigma_r2 must be positive");
    require(sigma_c2 > 0.0, "ScenarioConfig: sigma_c2 must be positive");
    require(m >= 2, "ScenarioConfig: m must be >= 2");
    // constellation must be square QAM: m = 4^q for integer q, or BPSK m=2
    bool square = m == 2;
    if (!square) {
        int mm = m;
        while (mm % 4 == 0) mm /= 4;
        square = mm == 1;
    }
    require(square, "ScenarioConfig: m must be 2 or a power of 4");
}

Eigen::VectorXcd steering_vector(const UlaGeometry& geom, double theta) {
    const std::vector<double> p = geom.positions();
    Eigen::VectorXcd a(geom.k);
    const double c = -2.0 * kPi * std::sin(theta) / geom.wavelength;
    for (int i = 0; i < geom.k; ++i) {
        const double phase = c * p[static_cast<size_t>(i)];
        a[i] = std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return a;
}

Eigen::MatrixXcd steering_matrix(const UlaGeometry& geom, const Eigen::VectorXd& angles) {
    Eigen::MatrixXcd a(geom.k, angles.size());
    for (Eigen::Index j = 0; j < angles.size(); ++j) {
        a.col(j) = steering_vector(geom, angles[j]);
    }
    return a;
}

UlaGeometry perturb_geometry(int k, double sigma_lambda, Rng& rng, double wavelength) {
    require(k >= 2, "perturb_geometry: k must be >= 2");
    require(sigma_lambda >= 0.0, "perturb_geometry: sigma_lambda must be >= 0");
    UlaGeometry g;
    g.k = k;
    g.wavelength = wavelength;
    g.gaps.resize(static_cast<size_t>(k - 1));
    for (int i = 0; i < k - 1; ++i) {
        double gap = 0.0;
        do {
            gap = rng.gaussian(0.5 * wavelength, sigma_lambda);
        } while (gap <= 0.0);
        g.gaps[static_cast<size_t>(i)] = gap;
    }
    return g;
}

AngularSector sample_target_sector(Rng& rng) {
    const double mean = rng.uniform(-60.0, 60.0);
    const double span = rng.uniform(10.0, 20.0);
    double lo = mean - 0.5 * span;
    double hi = mean + 0.5 * span;
    lo = std::max(lo, -90.0);
    hi = std::min(hi, 90.0);
    return AngularSector::from_degrees(lo, hi);
}

RadarDraw simulate_radar(const Eigen::VectorXcd& x, const UlaGeometry& geom,
                         const AngularSector& sector, const ScenarioConfig& cfg, Rng& rng,
                         PresenceMode presence) {
    return simulate_radar(x, geom, geom, sector, cfg, rng, presence);
}

RadarDraw simulate_radar(const Eigen::VectorXcd& x, const UlaGeometry& geom_tx,
                         const UlaGeometry& geom_rx, const AngularSector& sector,
                         const ScenarioConfig& cfg, Rng& rng, PresenceMode presence) {
    require(geom_tx.k == geom_rx.k, "simulate_radar: tx/rx antenna counts differ");
    require(x.size() == geom_tx.k, "simulate_radar: x must have K entries");
    require(!has_nan(x), "simulate_radar: x contains NaN");
    cfg.validate();

    RadarDraw d;
    switch (presence) {
        case PresenceMode::random: d.t = rng.uniform() < 0.5 ? 1 : 0; break;
        case PresenceMode::force_absent: d.t = 0; break;
        case PresenceMode::force_present: d.t = 1; break;
    }
    d.noise.resize(geom_tx.k);
    for (int i = 0; i < geom_tx.k; ++i) d.noise[i] = rng.cgaussian(cfg.n0);
    if (d.t == 1) {
        d.theta = sector.lo + rng.uniform() * sector.width();
        d.alpha = rng.cgaussian(cfg.sigma_r2);
        const Eigen::VectorXcd a_tx = steering_vector(geom_tx, d.theta);
        const Eigen::VectorXcd a_rx = steering_vector(geom_rx, d.theta);
        const std::complex<double> inner = a_tx.transpose() * x; // a^T x, no conjugation
        d.y_r = d.alpha * inner * a_rx + d.noise;
    } else {
        d.y_r = d.noise;
    }
    return d;
}

CommDraw simulate_comm(const Eigen::VectorXcd& v, std::complex<double> s,
                       const UlaGeometry& geom, const AngularSector& sector,
                       const ScenarioConfig& cfg, Rng& rng) {
    require(v.size() == geom.k, "simulate_comm: v must have K entries");
    require(!has_nan(v), "simulate_comm: v contains NaN");
    require(!std::isnan(s.real()) && !std::isnan(s.imag()), "simulate_comm: s contains NaN");
    cfg.validate();

    CommDraw d;
    d.vartheta = sector.lo + rng.uniform() * sector.width();
    d.beta = rng.cgaussian(cfg.sigma_c2);
    d.noise = rng.cgaussian(cfg.n0);
    const Eigen::VectorXcd a = steering_vector(geom, d.vartheta);
    const std::complex<double> inner = a.transpose() * v;
    d.kappa = d.beta * inner;
    d.y_c = d.kappa * s + d.noise;
    return d;
}

EpisodeBatch sample_episode_batch(int n, int k, const AngularSector& target_sector,
                                  const AngularSector& comm_sector, const ScenarioConfig& cfg,
                                  Rng& rng, PresenceMode presence) {
    require(n > 0, "sample_episode_batch: n must be positive");
    require(k >= 2, "sample_episode_batch: k must be >= 2");
    cfg.validate();

    EpisodeBatch b;
    b.t.resize(n);
    b.theta.resize(n);
    b.alpha.resize(n);
    b.message.resize(static_cast<size_t>(n));
    b.vartheta.resize(n);
    b.beta.resize(n);
    b.noise_c.resize(n);
    b.noise_r.resize(n, k);
    // Channel parameters first, then the radar noise block, so a fixed seed
    // yields the same parameter draws regardless of K.
    for (int i = 0; i < n; ++i) {
        switch (presence) {
            case PresenceMode::random: b.t[i] = rng.uniform() < 0.5 ? 1 : 0; break;
            case PresenceMode::force_absent: b.t[i] = 0; break;
            case PresenceMode::force_present: b.t[i] = 1; break;
        }
        b.theta[i] = target_sector.lo + rng.uniform() * target_sector.width();
        b.alpha[i] = rng.cgaussian(cfg.sigma_r2);
        b.message[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(cfg.m)));
        b.vartheta[i] = comm_sector.lo + rng.uniform() * comm_sector.width();
        b.beta[i] = rng.cgaussian(cfg.sigma_c2);
        b.noise_c[i] = rng.cgaussian(cfg.n0);
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) b.noise_r(i, j) = rng.cgaussian(cfg.n0);
    }
    return b;
}

} // namespace isac

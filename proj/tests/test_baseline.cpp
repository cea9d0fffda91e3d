#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "isac/baseline.hpp"
#include "isac/rng.hpp"

using namespace isac;

namespace {

constexpr double kPi = std::numbers::pi;

bool cnear(std::complex<double> a, std::complex<double> b, double tol = 1e-12) {
    return std::abs(a - b) <= tol;
}

// Steering matrix whose columns are exactly orthogonal: spatial frequencies
// spaced by 2/K make a^H(theta_i) a(theta_j) = K delta_ij.
Eigen::MatrixXcd orthogonal_steering(int k) {
    Eigen::VectorXd angles(k);
    for (int i = 0; i < k; ++i) angles[i] = std::asin(-1.0 + (2.0 * i + 1.0) / k);
    return steering_matrix(UlaGeometry::ideal(k), angles);
}

} // namespace

TEST_CASE("steering grid construction") {
    const SteeringGrid g = SteeringGrid::make(16, 500);
    CHECK(g.k() == 16);
    CHECK(g.n_grid() == 500);
    CHECK(g.theta_grid[0] == doctest::Approx(-kPi / 2).epsilon(1e-15));
    CHECK(g.theta_grid[499] == doctest::Approx(kPi / 2).epsilon(1e-15));
    for (int i = 1; i < 500; ++i) CHECK(g.theta_grid[i] > g.theta_grid[i - 1]);
    for (int j = 0; j < 500; j += 37) {
        for (int i = 0; i < 16; ++i) {
            CHECK(std::abs(std::abs(g.a_ideal(i, j)) - 1.0) < 1e-12);
        }
    }
    CHECK_THROWS_AS(SteeringGrid::make(16, 8), std::invalid_argument);

    const auto all = g.indices_in(AngularSector(-kPi / 2, kPi / 2));
    CHECK(static_cast<int>(all.size()) == 500);
}

TEST_CASE("desired beampattern") {
    const SteeringGrid g = SteeringGrid::make(16, 500);

    SUBCASE("full sector is all passband") {
        const BeamTarget t = desired_beampattern(AngularSector(-kPi / 2, kPi / 2), g, 16.0);
        CHECK(t.b.minCoeff() == 16.0);
    }

    SUBCASE("sector count matches direct recount") {
        const AngularSector sector = AngularSector::from_degrees(-40.0, -20.0);
        const BeamTarget t = desired_beampattern(sector, g, 16.0);
        int nonzero = 0;
        int expected = 0;
        for (int i = 0; i < 500; ++i) {
            if (t.b[i] != 0.0) {
                CHECK(t.b[i] == 16.0);
                ++nonzero;
            }
            if (g.theta_grid[i] >= sector.lo && g.theta_grid[i] <= sector.hi) ++expected;
        }
        CHECK(nonzero == expected);
        CHECK(nonzero > 0);
    }

    SUBCASE("binary variant") {
        const BeamTarget t = desired_beampattern(AngularSector::from_degrees(0.0, 10.0), g, 1.0);
        CHECK(t.b.maxCoeff() == 1.0);
    }

    SUBCASE("unresolvable sector") {
        // narrower than the grid step and between two grid points
        const double mid = 0.5 * (g.theta_grid[100] + g.theta_grid[101]);
        CHECK_THROWS_WITH_AS(desired_beampattern(AngularSector(mid, mid + 1e-6), g, 16.0),
                             "sector unresolvable at this grid", std::invalid_argument);
    }
}

TEST_CASE("ls beamformer") {
    const SteeringGrid g = SteeringGrid::make(16, 500);
    const AngularSector sector = AngularSector::from_degrees(-40.0, -20.0);
    const BeamTarget target = desired_beampattern(sector, g, 16.0);

    SUBCASE("energy normalization over random targets") {
        Rng rng(5);
        for (int n = 0; n < 1000; ++n) {
            BeamTarget t;
            t.b = Eigen::VectorXd::Zero(500);
            const int lo = static_cast<int>(rng.uniform_index(480));
            const int hi = lo + 1 + static_cast<int>(rng.uniform_index(19));
            for (int i = lo; i <= hi; ++i) t.b[i] = 16.0;
            const double e_tx = 0.25 + rng.uniform() * 4.0;
            const Eigen::VectorXcd x = ls_beamformer(g.a_ideal, t, e_tx);
            CHECK(x.squaredNorm() == doctest::Approx(e_tx).epsilon(1e-9));
        }
    }

    SUBCASE("invariant to positive scaling of the target") {
        const Eigen::VectorXcd x1 = ls_beamformer(g.a_ideal, target, 1.0);
        BeamTarget scaled;
        scaled.b = target.b * 3.0;
        const Eigen::VectorXcd x2 = ls_beamformer(g.a_ideal, scaled, 1.0);
        CHECK((x1 - x2).norm() < 1e-9);
    }

    SUBCASE("orthogonal-columns closed form") {
        const int k = 8;
        const Eigen::MatrixXcd a = orthogonal_steering(k);
        Rng rng(3);
        BeamTarget t;
        t.b = Eigen::VectorXd::Zero(k);
        for (int i = 0; i < k; ++i) t.b[i] = rng.uniform() < 0.5 ? 0.0 : static_cast<double>(k);
        t.b[2] = static_cast<double>(k); // never empty
        const Eigen::VectorXcd x = ls_beamformer(a, t, 1.0);
        Eigen::VectorXcd direct = a.conjugate() * t.b.cast<std::complex<double>>();
        direct *= 1.0 / direct.norm();
        CHECK((x - direct).norm() < 1e-9);
    }

    SUBCASE("empty target") {
        BeamTarget empty;
        empty.b = Eigen::VectorXd::Zero(500);
        CHECK_THROWS_WITH_AS(ls_beamformer(g.a_ideal, empty, 1.0), "empty target",
                             std::invalid_argument);
    }

    SUBCASE("synthesized beam concentrates energy in the sector") {
        const Eigen::VectorXcd x = ls_beamformer(g.a_ideal, target, 1.0);
        double inside = 0.0;
        double total = 0.0;
        for (int i = 0; i < 500; ++i) {
            const double p = std::norm(std::complex<double>(g.a_ideal.col(i).transpose() * x));
            total += p;
            if (sector.contains(g.theta_grid[i])) inside += p;
        }
        CHECK(inside / total >= 0.9);
    }

    SUBCASE("degenerate matrix trips the conditioning gate") {
        const Eigen::MatrixXcd zeros = Eigen::MatrixXcd::Zero(16, 500);
        CHECK_THROWS_AS(ls_beamformer(zeros, target, 1.0), std::runtime_error);
    }
}

TEST_CASE("trade-off combiner") {
    Rng rng(7);
    const int k = 16;

    SUBCASE("endpoint identities and energy over random inputs") {
        for (int n = 0; n < 1000; ++n) {
            Eigen::VectorXcd xr(k);
            Eigen::VectorXcd xc(k);
            for (int i = 0; i < k; ++i) {
                xr[i] = rng.cgaussian(1.0);
                xc[i] = rng.cgaussian(1.0);
            }
            const double e_tx = 0.5 + rng.uniform() * 2.0;
            const double rho = rng.uniform();
            const double phi = rng.uniform() * 2.0 * kPi;
            const Eigen::VectorXcd v = isac_combine(xr, xc, rho, phi, e_tx);
            CHECK(v.squaredNorm() == doctest::Approx(e_tx).epsilon(1e-9));

            const Eigen::VectorXcd v1 = isac_combine(xr, xc, 1.0, phi, e_tx);
            CHECK((v1 - std::sqrt(e_tx) * xr / xr.norm()).norm() < 1e-9);
            const Eigen::VectorXcd v0 = isac_combine(xr, xc, 0.0, phi, e_tx);
            const std::complex<double> rot(std::cos(phi), std::sin(phi));
            CHECK((v0 - std::sqrt(e_tx) * rot * xc / xc.norm()).norm() < 1e-9);
        }
    }

    SUBCASE("orthogonal equal-norm inputs split energy evenly") {
        Eigen::VectorXcd xr = Eigen::VectorXcd::Zero(4);
        Eigen::VectorXcd xc = Eigen::VectorXcd::Zero(4);
        xr[0] = 2.0;
        xc[1] = 2.0;
        const Eigen::VectorXcd v = isac_combine(xr, xc, 0.5, 0.0, 1.0);
        CHECK(std::norm(v[0]) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(std::norm(v[1]) == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("destructive combination") {
        Eigen::VectorXcd xr = Eigen::VectorXcd::Ones(4);
        CHECK_THROWS_WITH_AS(isac_combine(xr, -xr, 0.5, 0.0, 1.0), "destructive combination",
                             std::runtime_error);
        CHECK_THROWS_AS(isac_combine(xr, xr, 1.5, 0.0, 1.0), std::invalid_argument);
    }
}

TEST_CASE("matched-filter detector") {
    const SteeringGrid g = SteeringGrid::make(16, 200);
    const AngularSector sector = AngularSector::from_degrees(-40.0, -20.0);

    SUBCASE("steered input lands exactly on its grid angle") {
        const auto idx = g.indices_in(sector);
        for (int step = 0; step < 4; ++step) {
            const int i = idx[idx.size() / 2 + static_cast<size_t>(step)];
            const std::complex<double> c{1.3, -0.4};
            const Eigen::VectorXcd y = c * g.a_ideal.col(i);
            const DetectorOutput out = maprt(y, g, sector);
            CHECK(out.theta_hat == g.theta_grid[i]);
            CHECK(out.statistic == doctest::Approx(std::norm(c) * 256.0).epsilon(1e-9));
        }
    }

    SUBCASE("zero input: zero statistic, absent, first-index tie-break") {
        const Eigen::VectorXcd y = Eigen::VectorXcd::Zero(16);
        const DetectorOutput out = maprt(y, g, sector, 1e-12);
        CHECK(out.statistic == 0.0);
        CHECK(out.decision == 0);
        CHECK(out.theta_hat == g.theta_grid[g.indices_in(sector).front()]);
    }

    SUBCASE("statistic invariant to global phase") {
        Rng rng(17);
        for (int n = 0; n < 1000; ++n) {
            Eigen::VectorXcd y(16);
            for (int i = 0; i < 16; ++i) y[i] = rng.cgaussian(1.0);
            const double phi = rng.uniform() * 2.0 * kPi;
            const std::complex<double> rot(std::cos(phi), std::sin(phi));
            const DetectorOutput a = maprt(y, g, sector);
            const DetectorOutput b = maprt(rot * y, g, sector);
            CHECK(a.theta_hat == b.theta_hat);
            CHECK(a.statistic == doctest::Approx(b.statistic).epsilon(1e-9));
        }
    }

    SUBCASE("decision respects the threshold") {
        Eigen::VectorXcd y = g.a_ideal.col(g.indices_in(sector)[3]);
        const DetectorOutput hit = maprt(y, g, sector, 100.0);
        CHECK(hit.decision == 1); // statistic = K^2 = 256 > 100
        const DetectorOutput miss = maprt(y, g, sector, 300.0);
        CHECK(miss.decision == 0);
    }

    SUBCASE("parabolic refinement helps off-grid targets") {
        const UlaGeometry geom = UlaGeometry::ideal(16);
        Rng rng(23);
        for (int n = 0; n < 200; ++n) {
            const double theta = rng.uniform(sector.lo + 2.0 * g.step(), sector.hi - 2.0 * g.step());
            const Eigen::VectorXcd y = steering_vector(geom, theta);
            const DetectorOutput coarse = maprt(y, g, sector, 0.0, false);
            const DetectorOutput fine = maprt(y, g, sector, 0.0, true);
            CHECK(fine.theta_hat >= sector.lo);
            CHECK(fine.theta_hat <= sector.hi);
            CHECK(std::abs(fine.theta_hat - theta) <= std::abs(coarse.theta_hat - theta) + 1e-12);
        }
    }

    SUBCASE("requires a grid angle inside the sector") {
        const double mid = 0.5 * (g.theta_grid[50] + g.theta_grid[51]);
        const Eigen::VectorXcd y = Eigen::VectorXcd::Ones(16);
        CHECK_THROWS_AS(maprt(y, g, AngularSector(mid, mid + 1e-9)), std::invalid_argument);
    }
}

TEST_CASE("qam constellations") {
    SUBCASE("qpsk layout") {
        const Constellation c = Constellation::make_qam(4);
        const double s = std::sqrt(0.5);
        CHECK(cnear(c.points[0], {s, s}));
        CHECK(cnear(c.points[1], {s, -s}));
        CHECK(cnear(c.points[2], {-s, s}));
        CHECK(cnear(c.points[3], {-s, -s}));
        for (int m = 0; m < 4; ++m) CHECK(std::norm(c.points[m]) == doctest::Approx(1.0));
    }

    SUBCASE("bpsk layout") {
        const Constellation c = Constellation::make_qam(2);
        CHECK(cnear(c.points[0], {1.0, 0.0}));
        CHECK(cnear(c.points[1], {-1.0, 0.0}));
    }

    SUBCASE("unit average energy") {
        for (int m : {2, 4, 16, 64}) {
            const Constellation c = Constellation::make_qam(m);
            double e = 0.0;
            for (int i = 0; i < m; ++i) e += std::norm(c.points[i]);
            CHECK(e / m == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    SUBCASE("gray labels differ by one bit between nearest neighbors") {
        const Constellation c = Constellation::make_qam(16);
        const double delta = std::sqrt(3.0 / 30.0);
        for (int i = 0; i < 16; ++i) {
            for (int j = i + 1; j < 16; ++j) {
                const double d = std::abs(c.points[i] - c.points[j]);
                if (std::abs(d - 2.0 * delta) < 1e-9) {
                    CHECK(std::popcount(static_cast<unsigned>(i ^ j)) == 1);
                }
            }
        }
    }

    SUBCASE("rejects invalid sizes and indices") {
        CHECK_THROWS_AS(Constellation::make_qam(8), std::invalid_argument);
        CHECK_THROWS_AS(Constellation::make_qam(1), std::invalid_argument);
        const Constellation c = Constellation::make_qam(4);
        CHECK_THROWS_AS(qam_encode(4, c), std::invalid_argument);
        CHECK_THROWS_AS(qam_encode(-1, c), std::invalid_argument);
        CHECK(qam_encode(2, c) == c.points[2]);
    }
}

TEST_CASE("mle decoding") {
    const Constellation c4 = Constellation::make_qam(4);
    const Constellation c16 = Constellation::make_qam(16);

    SUBCASE("noiseless round trip") {
        const std::complex<double> kappa{3.0, -2.0};
        for (int m = 0; m < 4; ++m) CHECK(mle_decode(kappa * c4.points[m], kappa, c4) == m);
        for (int m = 0; m < 16; ++m) CHECK(mle_decode(kappa * c16.points[m], kappa, c16) == m);
    }

    SUBCASE("zero channel ties to index zero") {
        CHECK(mle_decode({1.0, 1.0}, {0.0, 0.0}, c4) == 0);
    }

    SUBCASE("equidistant tie prefers the smaller index") {
        const std::complex<double> kappa{1.0, 0.0};
        const std::complex<double> mid = 0.5 * (c4.points[1] + c4.points[3]);
        CHECK(mle_decode(kappa * mid, kappa, c4) == 1);
    }

    SUBCASE("matches canonicalized decoding") {
        Rng rng(29);
        for (int n = 0; n < 1000; ++n) {
            const std::complex<double> kappa = rng.cgaussian(4.0);
            if (std::abs(kappa) < 1e-6) continue;
            const int m = static_cast<int>(rng.uniform_index(4));
            const std::complex<double> y = kappa * c4.points[m] + rng.cgaussian(0.5);
            int canon = 0;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < 4; ++i) {
                const double d = std::norm(y / kappa - c4.points[i]);
                if (d < best) {
                    best = d;
                    canon = i;
                }
            }
            CHECK(mle_decode(y, kappa, c4) == canon);
        }
    }

    SUBCASE("rejects non-finite channel") {
        CHECK_THROWS_AS(mle_decode({1.0, 0.0}, {std::nan(""), 0.0}, c4),
                        std::invalid_argument);
    }
}

TEST_CASE("monte carlo symbol error rate agrees with an independent oracle") {
    // library pipeline: comm-optimal LS beam, QPSK symbols, MLE decoding
    const SteeringGrid g = SteeringGrid::make(16, 500);
    const AngularSector comm = AngularSector::from_degrees(30.0, 50.0);
    ScenarioConfig cfg;
    const UlaGeometry geom = UlaGeometry::ideal(16);
    const BeamTarget t = desired_beampattern(comm, g, 16.0);
    const Eigen::VectorXcd v = ls_beamformer(g.a_ideal, t, cfg.e_tx);
    const Constellation c = Constellation::make_qam(4);

    const int n = 20000;
    Rng rng(404);
    long err_lib = 0;
    for (int i = 0; i < n; ++i) {
        const int m = static_cast<int>(rng.uniform_index(4));
        const CommDraw d = simulate_comm(v, qam_encode(m, c), geom, comm, cfg, rng);
        if (mle_decode(d.y_c, d.kappa, c) != m) ++err_lib;
    }

    // independent oracle: hand-rolled constellation, channel and decoder
    Rng orng(505);
    long err_oracle = 0;
    const double half = std::sqrt(0.5);
    const std::complex<double> table[4] = {{half, half}, {half, -half}, {-half, half}, {-half, -half}};
    for (int i = 0; i < n; ++i) {
        const int m = static_cast<int>(orng.uniform_index(4));
        const double vartheta = comm.lo + orng.uniform() * comm.width();
        const std::complex<double> beta = orng.cgaussian(cfg.sigma_c2);
        const std::complex<double> noise = orng.cgaussian(cfg.n0);
        std::complex<double> inner{0.0, 0.0};
        const Eigen::VectorXcd a = steering_vector(geom, vartheta);
        for (int q = 0; q < 16; ++q) inner += a[q] * v[q];
        const std::complex<double> kappa = beta * inner;
        const std::complex<double> y = kappa * table[m] + noise;
        int best = 0;
        double best_d = std::abs(y - kappa * table[0]);
        for (int q = 1; q < 4; ++q) {
            const double d = std::abs(y - kappa * table[q]);
            if (d < best_d) {
                best_d = d;
                best = q;
            }
        }
        if (best != m) ++err_oracle;
    }

    const double p1 = static_cast<double>(err_lib) / n;
    const double p2 = static_cast<double>(err_oracle) / n;
    const double pbar = 0.5 * (p1 + p2);
    const double sigma = std::sqrt(std::max(pbar * (1.0 - pbar) * 2.0 / n, 1e-12));
    INFO("library SER ", p1, " oracle SER ", p2);
    CHECK(std::abs(p1 - p2) <= 3.0 * sigma);
    // absolute sanity: the comm-optimal SER floor sits near 1.5e-3 to 2e-3
    CHECK(p1 > 1e-4);
    CHECK(p1 < 1e-2);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "isac/nnlearn.hpp"

using namespace isac;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXcd random_cvec(int k, Rng& rng) {
    Eigen::VectorXcd y(k);
    for (int i = 0; i < k; ++i) y[i] = rng.cgaussian(1.0);
    return y;
}

bool tensors_equal(const gt::Tensor& a, const gt::Tensor& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

bool mlp_equal(const MlpParams& a, const MlpParams& b) {
    if (a.w.size() != b.w.size()) return false;
    for (size_t i = 0; i < a.w.size(); ++i) {
        if (!tensors_equal(a.w[i], b.w[i]) || !tensors_equal(a.b[i], b.b[i])) return false;
    }
    return true;
}

} // namespace

TEST_CASE("mlp spec validation") {
    MlpSpec ok{{4, 8, 2}, HiddenAct::relu, OutAct::linear};
    CHECK_NOTHROW(ok.validate());
    MlpSpec shallow{{4, 2}, HiddenAct::relu, OutAct::linear};
    CHECK_THROWS_WITH_AS(shallow.validate(), "MlpSpec: need at least one hidden layer",
                         std::invalid_argument);
    MlpSpec zero{{4, 0, 2}, HiddenAct::relu, OutAct::linear};
    CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
}

TEST_CASE("glorot initialization") {
    const MlpSpec spec{{10, 20, 5}, HiddenAct::relu, OutAct::linear};
    Rng rng(31);
    const MlpParams p = init_mlp(spec, rng);
    REQUIRE(p.w.size() == 2);
    CHECK(p.w[0].rows == 20);
    CHECK(p.w[0].cols == 10);
    CHECK(p.w[1].rows == 5);
    CHECK(p.w[1].cols == 20);
    CHECK(p.b[0].rows == 1);
    CHECK(p.b[0].cols == 20);

    const double lim0 = std::sqrt(6.0 / 30.0);
    const double lim1 = std::sqrt(6.0 / 25.0);
    double max0 = 0.0;
    for (double x : p.w[0].data) {
        CHECK(std::abs(x) <= lim0);
        max0 = std::max(max0, std::abs(x));
    }
    CHECK(max0 > 0.5 * lim0); // the draw actually fills the range
    for (double x : p.w[1].data) CHECK(std::abs(x) <= lim1);
    for (double x : p.b[0].data) CHECK(x == 0.0);
    for (double x : p.b[1].data) CHECK(x == 0.0);

    Rng r2(31);
    CHECK(mlp_equal(p, init_mlp(spec, r2)));
}

TEST_CASE("mlp forward matches a hand computation") {
    MlpParams p;
    p.spec = MlpSpec{{2, 3, 2}, HiddenAct::relu, OutAct::linear};
    p.w.emplace_back(3, 2);
    p.w[0].data = {1.0, -1.0, 0.5, 0.25, -2.0, 1.5};
    p.b.emplace_back(1, 3);
    p.b[0].data = {0.1, -0.2, 0.0};
    p.w.emplace_back(2, 3);
    p.w[1].data = {1.0, 0.0, -1.0, 2.0, 1.0, 0.5};
    p.b.emplace_back(1, 2);
    p.b[1].data = {0.0, 0.3};

    Eigen::RowVectorXd x(2);
    x << 0.8, -0.4;
    // hidden pre-activation: (1.3, 0.1, -2.2) -> relu (1.3, 0.1, 0)
    // out: (1.3*1 + 0.1*0 - 0, 1.3*2 + 0.1*1 + 0.3) = (1.3, 3.0)
    const Eigen::RowVectorXd out = mlp_apply(p, x);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(1.3).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(3.0).epsilon(1e-14));

    SUBCASE("sigmoid head") {
        p.spec.out = OutAct::sigmoid;
        const Eigen::RowVectorXd s = mlp_apply(p, x);
        CHECK(s[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.3))).epsilon(1e-14));
    }
    SUBCASE("tanh head") {
        p.spec.out = OutAct::tanh;
        CHECK(mlp_apply(p, x)[0] == doctest::Approx(std::tanh(1.3)).epsilon(1e-14));
    }
    SUBCASE("softmax head") {
        p.spec.out = OutAct::softmax;
        const Eigen::RowVectorXd s = mlp_apply(p, x);
        CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(s[1] > s[0]);
    }
    SUBCASE("input width checked") {
        Eigen::RowVectorXd bad(3);
        bad.setZero();
        CHECK_THROWS_AS(mlp_apply(p, bad), std::invalid_argument);
    }
}

TEST_CASE("taped forward agrees with the plain forward") {
    const MlpSpec spec{{5, 7, 7, 3}, HiddenAct::relu, OutAct::softmax};
    Rng rng(32);
    const MlpParams p = init_mlp(spec, rng);

    gt::Tape t;
    std::vector<std::pair<gt::Id, gt::Id>> params;
    for (size_t i = 0; i < p.w.size(); ++i) {
        params.emplace_back(t.input(p.w[i]), t.input(p.b[i]));
    }
    gt::Tensor xb(6, 5);
    for (double& v : xb.data) v = rng.uniform(-2.0, 2.0);
    const gt::Id out = mlp_forward_t(t, spec, params, t.input(xb));
    const gt::Tensor batch_out = t.value(out);

    for (int r = 0; r < 6; ++r) {
        Eigen::RowVectorXd row(5);
        for (int c = 0; c < 5; ++c) row[c] = xb(r, c);
        const Eigen::RowVectorXd ref = mlp_apply(p, row);
        for (int c = 0; c < 3; ++c) {
            CHECK(batch_out(r, c) == doctest::Approx(ref[c]).epsilon(1e-12));
        }
    }

    CHECK_THROWS_AS(mlp_forward_t(t, spec, {params[0]}, t.input(xb)), std::invalid_argument);
}

TEST_CASE("encoder and learned constellation") {
    Rng rng(33);
    AeParams p;
    p.k = 4;
    p.m = 4;
    p.width = 6;
    p.encoder = init_mlp(MlpSpec{{4, 4, 4, 8, 2}, HiddenAct::relu, OutAct::linear}, rng);

    SUBCASE("normalization to unit average energy") {
        const Constellation c = nn_constellation(p);
        REQUIRE(static_cast<int>(c.points.size()) == 4);
        double e = 0.0;
        for (int m = 0; m < 4; ++m) e += std::norm(c.points[m]);
        CHECK(e / 4.0 == doctest::Approx(1.0).epsilon(1e-12));

        // matches an explicit normalization of the raw encoder outputs
        double raw_e = 0.0;
        std::vector<std::complex<double>> raw(4);
        for (int m = 0; m < 4; ++m) {
            raw[static_cast<size_t>(m)] = encoder_forward(p.encoder, m, 4);
            raw_e += std::norm(raw[static_cast<size_t>(m)]);
        }
        raw_e /= 4.0;
        for (int m = 0; m < 4; ++m) {
            CHECK(std::abs(c.points[m] - raw[static_cast<size_t>(m)] / std::sqrt(raw_e)) < 1e-12);
        }
    }

    SUBCASE("message index validation") {
        CHECK_THROWS_AS(encoder_forward(p.encoder, 4, 4), std::invalid_argument);
        CHECK_THROWS_AS(encoder_forward(p.encoder, -1, 4), std::invalid_argument);
    }

    SUBCASE("zero encoder rejected") {
        for (auto& w : p.encoder.w)
            for (double& x : w.data) x = 0.0;
        CHECK_THROWS_WITH_AS(nn_constellation(p), "nn_constellation: zero average energy",
                             std::runtime_error);
    }
}

TEST_CASE("beamformer head") {
    Rng rng(34);
    const int k = 8;
    const MlpSpec spec{{4, 12, 12, 12, 2 * k}, HiddenAct::relu, OutAct::linear};
    const MlpParams bf = init_mlp(spec, rng);
    const AngularSector target = AngularSector::from_degrees(-40.0, -20.0);
    const AngularSector comm = AngularSector::from_degrees(30.0, 50.0);

    const Eigen::VectorXcd v1 = beamformer_forward(bf, target, comm, 1.0);
    CHECK(v1.size() == k);
    CHECK(v1.squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));

    SUBCASE("energy scaling") {
        const Eigen::VectorXcd v4 = beamformer_forward(bf, target, comm, 4.0);
        CHECK(v4.squaredNorm() == doctest::Approx(4.0).epsilon(1e-12));
        CHECK((v4 - 2.0 * v1).norm() < 1e-12);
    }

    SUBCASE("sector features reach the output") {
        const AngularSector other = AngularSector::from_degrees(0.0, 15.0);
        const Eigen::VectorXcd v2 = beamformer_forward(bf, other, comm, 1.0);
        CHECK((v1 - v2).norm() > 1e-8);
    }

    SUBCASE("norm property over random sectors") {
        for (int n = 0; n < 1000; ++n) {
            const double lo = rng.uniform(-1.2, 1.0);
            const double hi = lo + rng.uniform(0.05, 0.4);
            const Eigen::VectorXcd v =
                beamformer_forward(bf, AngularSector(lo, hi), comm, 1.0);
            CHECK(v.squaredNorm() == doctest::Approx(1.0).epsilon(1e-9));
        }
    }

    SUBCASE("zero network rejected") {
        MlpParams dead = bf;
        for (auto& w : dead.w)
            for (double& x : w.data) x = 0.0;
        CHECK_THROWS_WITH_AS(beamformer_forward(dead, target, comm, 1.0),
                             "beamformer_forward: zero precoder", std::runtime_error);
    }
}

TEST_CASE("detector and decoder heads stay in range") {
    Rng rng(35);
    const int k = 8;
    const AngularSector sector = AngularSector::from_degrees(-40.0, -20.0);
    const MlpParams pr =
        init_mlp(MlpSpec{{2 * k + 2, 10, 10, 10, 1}, HiddenAct::relu, OutAct::sigmoid}, rng);
    const MlpParams an =
        init_mlp(MlpSpec{{2 * k + 2, 10, 10, 10, 1}, HiddenAct::relu, OutAct::tanh}, rng);
    const MlpParams rx =
        init_mlp(MlpSpec{{4, k, 2 * k, 2 * k, 4}, HiddenAct::relu, OutAct::softmax}, rng);

    for (int n = 0; n < 1000; ++n) {
        const Eigen::VectorXcd y = 3.0 * random_cvec(k, rng);
        const double p = presence_forward(pr, y, sector);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        const double theta = angle_forward(an, y, sector);
        CHECK(theta >= -kPi / 2);
        CHECK(theta <= kPi / 2);
        const Eigen::VectorXd probs = comm_rx_forward(rx, rng.cgaussian(4.0), rng.cgaussian(1.0));
        REQUIRE(probs.size() == 4);
        double total = 0.0;
        for (int i = 0; i < 4; ++i) {
            CHECK(probs[i] >= 0.0);
            total += probs[i];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("loss functions") {
    CHECK(bce(1.0, 0.7) == doctest::Approx(-std::log(0.7)).epsilon(1e-14));
    CHECK(bce(0.0, 0.7) == doctest::Approx(-std::log(0.3)).epsilon(1e-14));
    CHECK(bce(1.0, 0.0) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
    CHECK(bce(0.0, 1.0) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));

    CHECK(mse_deg(kPi / 180.0, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mse_deg(0.0, -3.0 * kPi / 180.0) == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(mse_deg(0.5, 0.5) == 0.0);

    Eigen::VectorXd probs(3);
    probs << 0.2, 0.5, 0.3;
    CHECK(cce(1, probs) == doctest::Approx(-std::log(0.5)).epsilon(1e-14));
    probs << 1.0, 0.0, 0.0;
    CHECK(cce(1, probs) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
    CHECK_THROWS_AS(cce(3, probs), std::invalid_argument);
}

TEST_CASE("autoencoder training") {
    ScenarioConfig scen;
    const UlaGeometry geom = UlaGeometry::ideal(4);
    NnTrainConfig cfg;
    cfg.width = 6;
    cfg.iterations_per_phase = 8;
    cfg.batch_size = 32;

    SUBCASE("histories and recorded dimensions") {
        Rng rng(36);
        const NnTrainResult res = train_nn(cfg, geom, geom, scen, rng);
        CHECK(static_cast<int>(res.loss_history_phase1.size()) == 8);
        CHECK(static_cast<int>(res.loss_history_phase2.size()) == 8);
        for (double l : res.loss_history_phase1) CHECK(std::isfinite(l));
        for (double l : res.loss_history_phase2) CHECK(std::isfinite(l));
        CHECK(res.params.k == 4);
        CHECK(res.params.m == 4);
        CHECK(res.params.width == 6);
        CHECK(res.params.omega_r == cfg.omega_r);
    }

    SUBCASE("deterministic in the seed") {
        Rng r1(37);
        Rng r2(37);
        const NnTrainResult a = train_nn(cfg, geom, geom, scen, r1);
        const NnTrainResult b = train_nn(cfg, geom, geom, scen, r2);
        CHECK(mlp_equal(a.params.encoder, b.params.encoder));
        CHECK(mlp_equal(a.params.beamformer, b.params.beamformer));
        CHECK(mlp_equal(a.params.presence, b.params.presence));
        CHECK(mlp_equal(a.params.angle, b.params.angle));
        CHECK(mlp_equal(a.params.comm_rx, b.params.comm_rx));
        CHECK(a.loss_history_phase1 == b.loss_history_phase1);
        CHECK(a.loss_history_phase2 == b.loss_history_phase2);
    }

    SUBCASE("pure comm weighting never moves the presence head") {
        // omega_r = 0 zeroes the detection gradient in phase 1, and phase 2
        // freezes the presence head outright, so it must remain at its
        // initialization no matter how long the run is.
        NnTrainConfig comm_only = cfg;
        comm_only.omega_r = 0.0;
        NnTrainConfig longer = comm_only;
        longer.iterations_per_phase = 16;
        Rng r1(38);
        Rng r2(38);
        const NnTrainResult a = train_nn(comm_only, geom, geom, scen, r1);
        const NnTrainResult b = train_nn(longer, geom, geom, scen, r2);
        CHECK(mlp_equal(a.params.presence, b.params.presence));
        CHECK_FALSE(mlp_equal(a.params.encoder, b.params.encoder));
        CHECK_FALSE(mlp_equal(a.params.comm_rx, b.params.comm_rx));
    }

    SUBCASE("config validation") {
        Rng rng(39);
        NnTrainConfig bad = cfg;
        bad.omega_r = 1.5;
        CHECK_THROWS_AS(train_nn(bad, geom, geom, scen, rng), std::invalid_argument);
        bad = cfg;
        bad.batch_size = 0;
        CHECK_THROWS_AS(train_nn(bad, geom, geom, scen, rng), std::invalid_argument);
        bad = cfg;
        bad.width = 0;
        CHECK_THROWS_AS(train_nn(bad, geom, geom, scen, rng), std::invalid_argument);
    }
}

TEST_CASE("nnae artifact round trip") {
    ScenarioConfig scen;
    const UlaGeometry geom = UlaGeometry::ideal(4);
    NnTrainConfig cfg;
    cfg.width = 5;
    cfg.iterations_per_phase = 2;
    cfg.batch_size = 16;
    cfg.omega_r = 0.15;
    Rng rng(40);
    const NnTrainResult res = train_nn(cfg, geom, geom, scen, rng);
    const fs::path path = fs::temp_directory_path() / "test_roundtrip.nnae";

    save_nnae(path.string(), res.params);
    const AeParams back = load_nnae(path.string());
    CHECK(back.k == 4);
    CHECK(back.m == 4);
    CHECK(back.width == 5);
    CHECK(back.omega_r == 0.15);
    CHECK(mlp_equal(back.encoder, res.params.encoder));
    CHECK(mlp_equal(back.beamformer, res.params.beamformer));
    CHECK(mlp_equal(back.presence, res.params.presence));
    CHECK(mlp_equal(back.angle, res.params.angle));
    CHECK(mlp_equal(back.comm_rx, res.params.comm_rx));

    SUBCASE("loaded artifact produces identical forwards") {
        const Eigen::VectorXcd v1 = beamformer_forward(
            res.params.beamformer, scen.target_prior, scen.comm_sector, 1.0);
        const Eigen::VectorXcd v2 =
            beamformer_forward(back.beamformer, scen.target_prior, scen.comm_sector, 1.0);
        CHECK((v1 - v2).norm() == 0.0);
    }

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_nnae("/nonexistent/x.nnae"), std::runtime_error);
    }

    SUBCASE("bad magic") {
        const fs::path bad = fs::temp_directory_path() / "test_badmagic.nnae";
        std::ofstream os(bad, std::ios::binary);
        os << "MDAS";
        os.close();
        CHECK_THROWS_AS(load_nnae(bad.string()), std::runtime_error);
    }

    SUBCASE("unsupported version") {
        const fs::path bad = fs::temp_directory_path() / "test_badver.nnae";
        std::ofstream os(bad, std::ios::binary);
        os << "NNAE";
        const uint32_t v9 = 9;
        os.write(reinterpret_cast<const char*>(&v9), 4);
        os.close();
        CHECK_THROWS_WITH_AS(load_nnae(bad.string()), "load_nnae: unsupported version",
                             std::runtime_error);
    }

    SUBCASE("truncated payload") {
        const fs::path bad = fs::temp_directory_path() / "test_trunc.nnae";
        save_nnae(bad.string(), res.params);
        fs::resize_file(bad, fs::file_size(bad) - 16);
        CHECK_THROWS_AS(load_nnae(bad.string()), std::runtime_error);
    }
    fs::remove(path);
}

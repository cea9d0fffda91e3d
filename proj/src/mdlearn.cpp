#include "isac/mdlearn.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "isac/adam.hpp"
#include "isac/detail/binio.hpp"

namespace isac {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRidgeRel = 1e-8; // ls_beamformer ridge, kept identical here

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

bool mask_nonzero(const BeamTarget& m) { return m.b.cwiseAbs().maxCoeff() > 0.0; }

// Identical masking/softmax sequence as the differentiable path.
Eigen::VectorXd masked_softmax_vec(const Eigen::VectorXd& stat, const Eigen::VectorXd& mask,
                                   const MdEstimateOptions& opt) {
    Eigen::VectorXd logits = stat.cwiseProduct(mask);
    if (opt.masked_softmax) logits += (-1e9) * (Eigen::VectorXd::Ones(mask.size()) - mask);
    if (opt.temperature != 1.0) logits /= opt.temperature;
    const double mx = logits.maxCoeff();
    Eigen::VectorXd g = (logits.array() - mx).exp();
    g /= g.sum();
    return g;
}

} // namespace

BeamTarget binary_mask(const Eigen::VectorXd& theta_grid, const AngularSector& sector) {
    BeamTarget t;
    t.b = Eigen::VectorXd::Zero(theta_grid.size());
    bool any = false;
    for (Eigen::Index i = 0; i < theta_grid.size(); ++i) {
        if (sector.contains(theta_grid[i])) {
            t.b[i] = 1.0;
            any = true;
        }
    }
    if (!any) throw std::invalid_argument("sector unresolvable at this grid");
    return t;
}

TrainableSteering init_steering(const SteeringGrid& grid, double noise_std, Rng& rng) {
    require(noise_std >= 0.0, "init_steering: noise_std must be >= 0");
    TrainableSteering ts;
    ts.theta_grid = grid.theta_grid;
    ts.a = grid.a_ideal;
    const double part_std = noise_std / std::sqrt(2.0);
    for (Eigen::Index i = 0; i < ts.a.rows(); ++i) {
        for (Eigen::Index j = 0; j < ts.a.cols(); ++j) {
            ts.a(i, j) += std::complex<double>(rng.gaussian(0.0, part_std),
                                               rng.gaussian(0.0, part_std));
        }
    }
    return ts;
}

Eigen::VectorXcd md_precoder(const Eigen::MatrixXcd& a, const BeamTarget& b, double e_tx) {
    require(a.cols() == b.b.size(), "md_precoder: a and b dimensions mismatch");
    require(e_tx > 0.0, "md_precoder: e_tx must be positive");
    if (!mask_nonzero(b)) throw std::invalid_argument("empty target");

    const int k = static_cast<int>(a.rows());
    const Eigen::MatrixXcd s = a.conjugate() * a.transpose();
    const Eigen::VectorXcd rhs = a.conjugate() * b.b.cast<std::complex<double>>();

    // Real block embedding; identical system (including the ridge) to the
    // c_solve path of the trainer.
    Eigen::MatrixXd block(2 * k, 2 * k);
    block.topLeftCorner(k, k) = s.real();
    block.topRightCorner(k, k) = -s.imag();
    block.bottomLeftCorner(k, k) = s.imag();
    block.bottomRightCorner(k, k) = s.real();
    const double ridge = kRidgeRel * block.trace() / static_cast<double>(2 * k);
    block.diagonal().array() += ridge;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(block);
    const Eigen::VectorXd ud = lu.matrixLU().diagonal().cwiseAbs();
    const double umin = ud.minCoeff();
    const double umax = ud.maxCoeff();
    if (!(umin > 0.0) || !(umax / umin < 1e14) || !std::isfinite(umax)) {
        std::ostringstream msg;
        msg << "md_precoder: degenerate solve, condition estimate "
            << (umin > 0.0 ? umax / umin : std::numeric_limits<double>::infinity());
        throw std::runtime_error(msg.str());
    }

    Eigen::VectorXd crhs(2 * k);
    crhs.head(k) = rhs.real();
    crhs.tail(k) = rhs.imag();
    const Eigen::VectorXd sol = lu.solve(crhs);
    Eigen::VectorXcd x(k);
    x.real() = sol.head(k);
    x.imag() = sol.tail(k);

    const double norm2 = x.squaredNorm();
    if (norm2 < 1e-24) throw std::runtime_error("md_precoder: zero solution");
    return (x * std::pow(norm2, -0.5)) * std::sqrt(e_tx);
}

MdEstimate md_estimate(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& y_r,
                       const BeamTarget& mask, const Eigen::VectorXd& theta_grid,
                       const MdEstimateOptions& opt) {
    require(a.rows() == y_r.size(), "md_estimate: y_r must have K entries");
    require(a.cols() == mask.b.size(), "md_estimate: mask length mismatch");
    require(a.cols() == theta_grid.size(), "md_estimate: grid length mismatch");
    if (!mask_nonzero(mask)) throw std::invalid_argument("md_estimate: all-zero mask");

    const Eigen::VectorXd stat = (a.adjoint() * y_r).cwiseAbs();
    MdEstimate e;
    e.g = masked_softmax_vec(stat, mask.b, opt);
    e.theta_hat = e.g.dot(theta_grid);
    return e;
}

DetectorOutput md_detect(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& y_r,
                         const BeamTarget& mask, double threshold,
                         const Eigen::VectorXd& theta_grid, const MdEstimateOptions& opt) {
    require(a.rows() == y_r.size(), "md_detect: y_r must have K entries");
    if (!mask_nonzero(mask)) throw std::invalid_argument("md_detect: all-zero mask");
    const Eigen::VectorXd stat = (a.adjoint() * y_r).cwiseAbs().cwiseProduct(mask.b);
    DetectorOutput out;
    out.statistic = stat.maxCoeff();
    out.theta_hat = md_estimate(a, y_r, mask, theta_grid, opt).theta_hat;
    out.decision = out.statistic > threshold ? 1 : 0;
    return out;
}

Eigen::VectorXcd md_isac_precoder(const TrainableSteering& ts, const AngularSector& target_sector,
                                  const AngularSector& comm_sector, double omega_r, double e_tx) {
    require(omega_r >= 0.0 && omega_r <= 1.0, "md_isac_precoder: omega_r must be in [0,1]");
    const Eigen::VectorXcd v_r = md_precoder(ts.a, binary_mask(ts.theta_grid, target_sector), e_tx);
    const Eigen::VectorXcd v_c = md_precoder(ts.a, binary_mask(ts.theta_grid, comm_sector), e_tx);
    return isac_combine(v_r, v_c, omega_r, 0.0, e_tx);
}

gt::CVar md_precoder_t(gt::Tape& t, gt::CVar a, const Eigen::VectorXd& mask, double e_tx) {
    require(e_tx > 0.0, "md_precoder_t: e_tx must be positive");
    require(mask.cwiseAbs().maxCoeff() > 0.0, "empty target");
    const gt::CVar conj_a = c_conj(t, a);
    const gt::CVar s = c_matmul(t, conj_a, c_transpose(t, a));
    const gt::Id b_const = t.constant(gt::Tensor::from(mask));
    const gt::CVar rhs{t.matmul(conj_a.re, b_const), t.matmul(conj_a.im, b_const)};
    const gt::CVar x = c_solve(t, s, rhs, kRidgeRel);
    const gt::Id norm2 = c_norm2(t, x);
    const gt::Id inv_norm = t.pow_const(norm2, -0.5);
    return c_scale(t, c_smul(t, x, inv_norm), std::sqrt(e_tx));
}

gt::Id md_estimate_batch_t(gt::Tape& t, gt::CVar a, gt::CVar y_r_batch,
                           const Eigen::VectorXd& mask, const Eigen::VectorXd& theta_grid,
                           const MdEstimateOptions& opt) {
    const int n = t.value(y_r_batch.re).rows;
    const int n_grid = static_cast<int>(mask.size());
    require(mask.cwiseAbs().maxCoeff() > 0.0, "md_estimate_batch_t: all-zero mask");

    const gt::CVar z = c_matmul(t, y_r_batch, c_conj(t, a)); // row i = (A^H y_i)^T
    gt::Id logits = t.elementwise_mask(c_abs(t, z), gt::Tensor::from(mask.transpose()));
    if (opt.masked_softmax) {
        Eigen::MatrixXd shift(n, n_grid);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n_grid; ++j) shift(i, j) = (-1e9) * (1.0 - mask[j]);
        logits = t.add_const(logits, gt::Tensor::from(shift));
    }
    if (opt.temperature != 1.0) logits = t.scale(logits, 1.0 / opt.temperature);
    const gt::Id g = t.softmax_rows(logits);
    return t.matmul(g, t.constant(gt::Tensor::from(theta_grid)));
}

MdTrainResult train_md(const MdTrainConfig& cfg, const UlaGeometry& geom_tx,
                       const UlaGeometry& geom_rx, const ScenarioConfig& scen, Rng& rng) {
    require(cfg.iterations >= 0, "train_md: iterations must be >= 0");
    require(cfg.batch_size > 0, "train_md: batch_size must be positive");
    require(cfg.lr >= 0.0, "train_md: lr must be >= 0");
    require(geom_tx.k == geom_rx.k, "train_md: tx/rx antenna counts differ");
    scen.validate();

    const int k = geom_tx.k;
    const SteeringGrid grid = SteeringGrid::make(k, cfg.n_grid);
    TrainableSteering ts = init_steering(grid, cfg.init_noise_std, rng);

    MdTrainResult result;
    result.loss_history.reserve(static_cast<size_t>(cfg.iterations));

    gt::Tensor a_re = gt::Tensor::from(ts.a.real());
    gt::Tensor a_im = gt::Tensor::from(ts.a.imag());
    gt::AdamState adam;
    const gt::AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8};

    for (int it = 0; it < cfg.iterations; ++it) {
        AngularSector sector = sample_target_sector(rng);
        BeamTarget mask;
        for (int tries = 0;; ++tries) {
            try {
                mask = binary_mask(grid.theta_grid, sector);
                break;
            } catch (const std::invalid_argument&) {
                if (tries >= 1000) throw;
                sector = sample_target_sector(rng);
            }
        }

        EpisodeBatch batch = sample_episode_batch(cfg.batch_size, k, sector, scen.comm_sector,
                                                  scen, rng, PresenceMode::force_present);

        gt::Tape tape;
        Eigen::MatrixXcd a_cur(k, cfg.n_grid);
        a_cur.real() = a_re.eigen();
        a_cur.imag() = a_im.eigen();
        const gt::CVar a = c_input(tape, a_cur);

        const gt::CVar x = md_precoder_t(tape, a, mask.b, scen.e_tx);

        Eigen::MatrixXcd a_tx_rows(cfg.batch_size, k);
        Eigen::MatrixXcd a_rx_rows(cfg.batch_size, k);
        for (int i = 0; i < cfg.batch_size; ++i) {
            a_tx_rows.row(i) = steering_vector(geom_tx, batch.theta[i]).transpose();
            a_rx_rows.row(i) = steering_vector(geom_rx, batch.theta[i]).transpose();
        }
        const gt::CVar inner = c_matmul(tape, c_constant(tape, a_tx_rows), x); // n x 1
        const gt::CVar p = c_mul(tape, inner, c_constant(tape, batch.alpha));
        const gt::CVar y_r = c_add(tape, c_row_scale(tape, c_constant(tape, a_rx_rows), p),
                                   c_constant(tape, batch.noise_r));

        const gt::Id theta_hat =
            md_estimate_batch_t(tape, a, y_r, mask.b, grid.theta_grid, cfg.estimate);
        const gt::Id err_deg = tape.sub(tape.scale(theta_hat, 180.0 / kPi),
                                        tape.constant(gt::Tensor::from(batch.theta * (180.0 / kPi))));
        const gt::Id loss = tape.mean(tape.square(err_deg));

        const double loss_val = tape.value(loss)(0, 0);
        if (!std::isfinite(loss_val)) {
            std::ostringstream msg;
            msg << "train_md: non-finite loss " << loss_val << " at iteration " << it;
            throw std::runtime_error(msg.str());
        }
        result.loss_history.push_back(loss_val);

        tape.backward(loss);
        std::vector<gt::Tensor> grads{tape.grad(a.re), tape.grad(a.im)};
        std::vector<gt::Tensor*> params{&a_re, &a_im};
        adam_step(params, grads, adam, adam_cfg);
    }

    ts.a.real() = a_re.eigen();
    ts.a.imag() = a_im.eigen();
    result.steering = std::move(ts);
    return result;
}

void save_mdas(const std::string& path, const TrainableSteering& ts) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_mdas: cannot open " + path);
    const int k = static_cast<int>(ts.a.rows());
    const int n_grid = static_cast<int>(ts.a.cols());
    detail::write_magic(os, "MDAS");
    detail::write_u32_le(os, 1u);
    detail::write_u32_le(os, static_cast<uint32_t>(k));
    detail::write_u32_le(os, static_cast<uint32_t>(n_grid));
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < n_grid; ++j) {
            detail::write_f64_le(os, ts.a(i, j).real());
            detail::write_f64_le(os, ts.a(i, j).imag());
        }
    }
    if (!os) throw std::runtime_error("save_mdas: write failed for " + path);
}

TrainableSteering load_mdas(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_mdas: cannot open " + path);
    detail::check_magic(is, "MDAS", "load_mdas: bad magic");
    const uint32_t version = detail::read_u32_le(is);
    if (version != 1u) throw std::runtime_error("load_mdas: unsupported version");
    const uint32_t k = detail::read_u32_le(is);
    const uint32_t n_grid = detail::read_u32_le(is);
    if (k < 2 || n_grid < k) throw std::runtime_error("load_mdas: bad dimensions");

    TrainableSteering ts;
    ts.a.resize(k, n_grid);
    for (uint32_t i = 0; i < k; ++i) {
        for (uint32_t j = 0; j < n_grid; ++j) {
            const double re = detail::read_f64_le(is);
            const double im = detail::read_f64_le(is);
            if (!std::isfinite(re) || !std::isfinite(im)) {
                throw std::runtime_error("load_mdas: non-finite entry");
            }
            ts.a(i, j) = std::complex<double>(re, im);
        }
    }
    ts.theta_grid.resize(n_grid);
    const double step = kPi / static_cast<double>(n_grid - 1);
    for (uint32_t i = 0; i < n_grid; ++i) ts.theta_grid[i] = -kPi / 2 + step * i;
    return ts;
}

} // namespace isac

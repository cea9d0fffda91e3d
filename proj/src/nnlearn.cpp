#include "isac/nnlearn.hpp"

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
constexpr double kProbFloor = 1e-12;
constexpr double kAngleScale = 2.0 / kPi; // radians -> [-1, 1] features

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

MlpSpec encoder_spec(int k, int m) { return {{m, k, k, 2 * k, 2}, HiddenAct::relu, OutAct::linear}; }

MlpSpec beamformer_spec(int k, int n) {
    return {{4, n, n, n, 2 * k}, HiddenAct::relu, OutAct::linear};
}

MlpSpec presence_spec(int k, int n) {
    return {{2 * k + 2, n, n, n, 1}, HiddenAct::relu, OutAct::sigmoid};
}

MlpSpec angle_spec(int k, int n) { return {{2 * k + 2, n, n, n, 1}, HiddenAct::relu, OutAct::tanh}; }

MlpSpec comm_rx_spec(int k, int m) {
    return {{4, k, 2 * k, 2 * k, m}, HiddenAct::relu, OutAct::softmax};
}

Eigen::RowVectorXd radar_features(const Eigen::VectorXcd& y_r, const AngularSector& sector) {
    const int k = static_cast<int>(y_r.size());
    Eigen::RowVectorXd f(2 * k + 2);
    f.segment(0, k) = y_r.real().transpose();
    f.segment(k, k) = y_r.imag().transpose();
    f[2 * k] = sector.lo * kAngleScale;
    f[2 * k + 1] = sector.hi * kAngleScale;
    return f;
}

void apply_out_act(OutAct act, Eigen::RowVectorXd& z) {
    switch (act) {
        case OutAct::linear: break;
        case OutAct::sigmoid:
            z = (1.0 / (1.0 + (-z.array()).exp())).matrix();
            break;
        case OutAct::tanh: z = z.array().tanh().matrix(); break;
        case OutAct::softmax: {
            const double mx = z.maxCoeff();
            Eigen::ArrayXd e = (z.array() - mx).exp();
            z = (e / e.sum()).matrix();
            break;
        }
    }
}

} // namespace

void MlpSpec::validate() const {
    require(widths.size() >= 3, "MlpSpec: need at least one hidden layer");
    for (int w : widths) require(w > 0, "MlpSpec: widths must be positive");
}

MlpParams init_mlp(const MlpSpec& spec, Rng& rng) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    for (size_t i = 0; i + 1 < spec.widths.size(); ++i) {
        const int fan_in = spec.widths[i];
        const int fan_out = spec.widths[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        gt::Tensor w(fan_out, fan_in);
        for (double& x : w.data) x = rng.uniform(-limit, limit);
        p.w.push_back(std::move(w));
        p.b.push_back(gt::Tensor::zeros(1, fan_out));
    }
    return p;
}

Eigen::RowVectorXd mlp_apply(const MlpParams& p, const Eigen::RowVectorXd& x) {
    require(x.size() == p.spec.widths.front(), "mlp_apply: input width mismatch");
    Eigen::RowVectorXd h = x;
    for (size_t i = 0; i < p.w.size(); ++i) {
        Eigen::RowVectorXd z = h * p.w[i].eigen().transpose() + p.b[i].eigen();
        if (i + 1 < p.w.size()) {
            z = z.cwiseMax(0.0);
        } else {
            apply_out_act(p.spec.out, z);
        }
        h = std::move(z);
    }
    return h;
}

gt::Id mlp_forward_t(gt::Tape& t, const MlpSpec& spec,
                     const std::vector<std::pair<gt::Id, gt::Id>>& params, gt::Id x) {
    require(params.size() + 1 == spec.widths.size(), "mlp_forward_t: layer count mismatch");
    const int batch = t.value(x).rows;
    const gt::Id ones = t.constant(gt::Tensor::full(batch, 1, 1.0));
    gt::Id h = x;
    for (size_t i = 0; i < params.size(); ++i) {
        gt::Id z = t.add(t.matmul(h, t.transpose(params[i].first)),
                         t.matmul(ones, params[i].second));
        if (i + 1 < params.size()) {
            z = t.relu(z);
        } else {
            switch (spec.out) {
                case OutAct::linear: break;
                case OutAct::sigmoid: z = t.sigmoid(z); break;
                case OutAct::tanh: z = t.tanh_(z); break;
                case OutAct::softmax: z = t.softmax_rows(z); break;
            }
        }
        h = z;
    }
    return h;
}

std::complex<double> encoder_forward(const MlpParams& enc, int m, int m_count) {
    require(m >= 0 && m < m_count, "encoder_forward: message index out of range");
    Eigen::RowVectorXd onehot = Eigen::RowVectorXd::Zero(m_count);
    onehot[m] = 1.0;
    const Eigen::RowVectorXd out = mlp_apply(enc, onehot);
    return {out[0], out[1]};
}

Constellation nn_constellation(const AeParams& p) {
    Constellation c;
    c.points.resize(p.m);
    double energy = 0.0;
    for (int m = 0; m < p.m; ++m) {
        c.points[m] = encoder_forward(p.encoder, m, p.m);
        energy += std::norm(c.points[m]);
    }
    energy /= static_cast<double>(p.m);
    if (!(energy > 1e-300)) throw std::runtime_error("nn_constellation: zero average energy");
    c.points *= std::pow(energy, -0.5);
    return c;
}

Eigen::VectorXcd beamformer_forward(const MlpParams& bf, const AngularSector& target_sector,
                                    const AngularSector& comm_sector, double e_tx) {
    require(e_tx > 0.0, "beamformer_forward: e_tx must be positive");
    Eigen::RowVectorXd feat(4);
    feat << target_sector.lo * kAngleScale, target_sector.hi * kAngleScale,
        comm_sector.lo * kAngleScale, comm_sector.hi * kAngleScale;
    const Eigen::RowVectorXd out = mlp_apply(bf, feat);
    const int k = static_cast<int>(out.size()) / 2;
    Eigen::VectorXcd v(k);
    v.real() = out.segment(0, k).transpose();
    v.imag() = out.segment(k, 2 * k - k).transpose();
    const double norm2 = v.squaredNorm();
    if (!(norm2 > 1e-300)) throw std::runtime_error("beamformer_forward: zero precoder");
    return (v * std::pow(norm2, -0.5)) * std::sqrt(e_tx);
}

double presence_forward(const MlpParams& pr, const Eigen::VectorXcd& y_r,
                        const AngularSector& sector) {
    return mlp_apply(pr, radar_features(y_r, sector))[0];
}

double angle_forward(const MlpParams& an, const Eigen::VectorXcd& y_r,
                     const AngularSector& sector) {
    return (kPi / 2.0) * mlp_apply(an, radar_features(y_r, sector))[0];
}

Eigen::VectorXd comm_rx_forward(const MlpParams& rx, std::complex<double> y_c,
                                std::complex<double> kappa) {
    Eigen::RowVectorXd feat(4);
    feat << y_c.real(), y_c.imag(), kappa.real(), kappa.imag();
    return mlp_apply(rx, feat).transpose();
}

double bce(double t, double p_hat) {
    const double p1 = std::max(p_hat, kProbFloor);
    const double p0 = std::max(1.0 - p_hat, kProbFloor);
    return -(t * std::log(p1) + (1.0 - t) * std::log(p0));
}

double mse_deg(double theta_hat_rad, double theta_rad) {
    const double e = (theta_hat_rad - theta_rad) * (180.0 / kPi);
    return e * e;
}

double cce(int m_true, const Eigen::VectorXd& probs) {
    require(m_true >= 0 && m_true < probs.size(), "cce: index out of range");
    return -std::log(std::max(probs[m_true], kProbFloor));
}

namespace {

AeParams init_ae(int k, int m, int width, double omega_r, Rng& rng) {
    AeParams p;
    p.k = k;
    p.m = m;
    p.width = width;
    p.omega_r = omega_r;
    p.encoder = init_mlp(encoder_spec(k, m), rng);
    p.beamformer = init_mlp(beamformer_spec(k, width), rng);
    p.presence = init_mlp(presence_spec(k, width), rng);
    p.angle = init_mlp(angle_spec(k, width), rng);
    p.comm_rx = init_mlp(comm_rx_spec(k, m), rng);
    return p;
}

// Tape registration; trainable parameters become inputs, frozen ones constants.
std::vector<std::pair<gt::Id, gt::Id>> register_mlp(gt::Tape& t, const MlpParams& p,
                                                    bool trainable) {
    std::vector<std::pair<gt::Id, gt::Id>> ids;
    for (size_t i = 0; i < p.w.size(); ++i) {
        if (trainable) {
            ids.emplace_back(t.input(p.w[i]), t.input(p.b[i]));
        } else {
            ids.emplace_back(t.constant(p.w[i]), t.constant(p.b[i]));
        }
    }
    return ids;
}

void collect_mlp(gt::Tape& t, const std::vector<std::pair<gt::Id, gt::Id>>& ids,
                 MlpParams& p, std::vector<gt::Tensor*>& params, std::vector<gt::Tensor>& grads) {
    for (size_t i = 0; i < ids.size(); ++i) {
        params.push_back(&p.w[i]);
        grads.push_back(t.grad(ids[i].first));
        params.push_back(&p.b[i]);
        grads.push_back(t.grad(ids[i].second));
    }
}

} // namespace

NnTrainResult train_nn(const NnTrainConfig& cfg, const UlaGeometry& geom_tx,
                       const UlaGeometry& geom_rx, const ScenarioConfig& scen, Rng& rng) {
    require(cfg.omega_r >= 0.0 && cfg.omega_r <= 1.0, "train_nn: omega_r must be in [0,1]");
    require(cfg.width > 0, "train_nn: width must be positive");
    require(cfg.iterations_per_phase >= 0, "train_nn: iterations must be >= 0");
    require(cfg.batch_size > 0, "train_nn: batch_size must be positive");
    require(cfg.lr >= 0.0, "train_nn: lr must be >= 0");
    require(geom_tx.k == geom_rx.k, "train_nn: tx/rx antenna counts differ");
    scen.validate();

    const int k = geom_tx.k;
    const int m = scen.m;
    const int batch = cfg.batch_size;
    const double w_r = cfg.omega_r;

    NnTrainResult result;
    result.params = init_ae(k, m, cfg.width, w_r, rng);
    AeParams& ae = result.params;

    const gt::AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8};

    for (int phase = 1; phase <= 2; ++phase) {
        gt::AdamState adam;
        auto& history = phase == 1 ? result.loss_history_phase1 : result.loss_history_phase2;
        history.reserve(static_cast<size_t>(cfg.iterations_per_phase));

        for (int it = 0; it < cfg.iterations_per_phase; ++it) {
            const AngularSector sector = sample_target_sector(rng);
            const EpisodeBatch ep = sample_episode_batch(batch, k, sector, scen.comm_sector,
                                                         scen, rng, PresenceMode::random);

            gt::Tape tape;
            auto enc_ids = register_mlp(tape, ae.encoder, true);
            auto bf_ids = register_mlp(tape, ae.beamformer, true);
            auto pres_ids =
                phase == 1 ? register_mlp(tape, ae.presence, true)
                           : std::vector<std::pair<gt::Id, gt::Id>>{};
            auto angle_ids =
                phase == 2 ? register_mlp(tape, ae.angle, true)
                           : std::vector<std::pair<gt::Id, gt::Id>>{};
            auto comm_ids = register_mlp(tape, ae.comm_rx, true);

            // encoder: one-hot messages -> batch-normalized symbols
            Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(batch, m);
            for (int i = 0; i < batch; ++i) onehot(i, ep.message[static_cast<size_t>(i)]) = 1.0;
            const gt::Id onehot_c = tape.constant(gt::Tensor::from(onehot));
            const gt::Id s_raw = mlp_forward_t(tape, ae.encoder.spec, enc_ids, onehot_c);
            const gt::Id s_energy =
                tape.clamp_min(tape.mean(tape.row_sum(tape.square(s_raw))), 1e-30);
            const gt::Id s_norm = tape.smul(s_raw, tape.pow_const(s_energy, -0.5));
            const gt::CVar s{tape.slice_cols(s_norm, 0, 1), tape.slice_cols(s_norm, 1, 2)};

            // beamformer: sector features -> normalized precoder
            Eigen::MatrixXd bf_feat(1, 4);
            bf_feat << sector.lo * kAngleScale, sector.hi * kAngleScale,
                scen.comm_sector.lo * kAngleScale, scen.comm_sector.hi * kAngleScale;
            const gt::Id bf_in = tape.constant(gt::Tensor::from(bf_feat));
            const gt::Id v_raw = mlp_forward_t(tape, ae.beamformer.spec, bf_ids, bf_in);
            const gt::Id v_norm2 = tape.clamp_min(tape.sum(tape.square(v_raw)), 1e-30);
            const gt::Id v_n =
                tape.scale(tape.smul(v_raw, tape.pow_const(v_norm2, -0.5)), std::sqrt(scen.e_tx));
            const gt::CVar v{tape.slice_cols(v_n, 0, k), tape.slice_cols(v_n, k, 2 * k)};

            // transmitted block: row i = s_i * v
            const gt::CVar x = c_matmul(tape, s, v);

            // radar channel
            Eigen::MatrixXcd a_tx_rows(batch, k);
            Eigen::MatrixXcd a_rx_rows(batch, k);
            for (int i = 0; i < batch; ++i) {
                a_tx_rows.row(i) = steering_vector(geom_tx, ep.theta[i]).transpose();
                a_rx_rows.row(i) = steering_vector(geom_rx, ep.theta[i]).transpose();
            }
            Eigen::VectorXcd alpha_eff(batch);
            for (int i = 0; i < batch; ++i) {
                alpha_eff[i] = ep.t[i] == 1 ? ep.alpha[i] : std::complex<double>(0.0);
            }
            const gt::CVar prod = c_mul(tape, c_constant(tape, a_tx_rows), x);
            const gt::CVar inner{tape.row_sum(prod.re), tape.row_sum(prod.im)};
            const gt::CVar p_eff = c_mul(tape, inner, c_constant(tape, alpha_eff));
            const gt::CVar y_r =
                c_add(tape, c_row_scale(tape, c_constant(tape, a_rx_rows), p_eff),
                      c_constant(tape, ep.noise_r));

            // radar-side features
            Eigen::MatrixXd sector_feat(batch, 2);
            for (int i = 0; i < batch; ++i) {
                sector_feat(i, 0) = sector.lo * kAngleScale;
                sector_feat(i, 1) = sector.hi * kAngleScale;
            }
            const gt::Id radar_in = tape.concat_cols(
                tape.concat_cols(y_r.re, y_r.im), tape.constant(gt::Tensor::from(sector_feat)));

            // comm channel: kappa = beta * a(vartheta)^T v, y_c = kappa s + n
            Eigen::MatrixXcd a_c_rows(batch, k);
            for (int i = 0; i < batch; ++i) {
                a_c_rows.row(i) = steering_vector(geom_tx, ep.vartheta[i]).transpose();
            }
            const gt::CVar inner_v =
                c_matmul(tape, c_constant(tape, a_c_rows), c_transpose(tape, v));
            const gt::CVar kappa = c_mul(tape, inner_v, c_constant(tape, ep.beta));
            const gt::CVar y_c = c_add(tape, c_mul(tape, kappa, s), c_constant(tape, ep.noise_c));
            const gt::Id comm_in = tape.concat_cols(tape.concat_cols(y_c.re, y_c.im),
                                                    tape.concat_cols(kappa.re, kappa.im));
            const gt::Id probs = mlp_forward_t(tape, ae.comm_rx.spec, comm_ids, comm_in);

            // J_comm: mean cross-entropy of the true message
            const gt::Id p_true = tape.row_sum(tape.mul(probs, onehot_c));
            const gt::Id j_comm = tape.scale(
                tape.mean(tape.log_(tape.clamp_min(p_true, kProbFloor))), -1.0);

            Eigen::VectorXd t_mask(batch);
            for (int i = 0; i < batch; ++i) t_mask[i] = ep.t[i] == 1 ? 1.0 : 0.0;
            const double n_present = t_mask.sum();

            gt::Id j_sense = -1;
            if (phase == 1) {
                const gt::Id p_hat = mlp_forward_t(tape, ae.presence.spec, pres_ids, radar_in);
                const gt::Id log_p = tape.log_(tape.clamp_min(p_hat, kProbFloor));
                const gt::Id hit = tape.elementwise_mask(log_p, gt::Tensor::from(t_mask));
                if (cfg.bce_all_samples) {
                    const gt::Id one_minus =
                        tape.sub(tape.constant(gt::Tensor::full(batch, 1, 1.0)), p_hat);
                    const gt::Id log_q = tape.log_(tape.clamp_min(one_minus, kProbFloor));
                    Eigen::VectorXd absent = Eigen::VectorXd::Ones(batch) - t_mask;
                    const gt::Id miss = tape.elementwise_mask(log_q, gt::Tensor::from(absent));
                    j_sense = tape.scale(tape.mean(tape.add(hit, miss)), -1.0);
                } else {
                    j_sense = tape.scale(tape.mean(hit), -1.0);
                }
            } else {
                const gt::Id raw = mlp_forward_t(tape, ae.angle.spec, angle_ids, radar_in);
                const gt::Id theta_hat = tape.scale(raw, kPi / 2.0);
                const gt::Id err_deg =
                    tape.sub(tape.scale(theta_hat, 180.0 / kPi),
                             tape.constant(gt::Tensor::from(ep.theta * (180.0 / kPi))));
                const gt::Id sq = tape.square(err_deg);
                if (n_present > 0.0) {
                    const gt::Id masked = tape.elementwise_mask(sq, gt::Tensor::from(t_mask));
                    j_sense = tape.scale(tape.sum(masked), 1.0 / n_present);
                }
            }

            gt::Id total = tape.scale(j_comm, 1.0 - w_r);
            if (j_sense >= 0) total = tape.add(total, tape.scale(j_sense, w_r));

            const double loss_val = tape.value(total)(0, 0);
            if (!std::isfinite(loss_val)) {
                std::ostringstream msg;
                msg << "train_nn: non-finite loss " << loss_val << " at phase " << phase
                    << " iteration " << it;
                throw std::runtime_error(msg.str());
            }
            history.push_back(loss_val);

            tape.backward(total);
            std::vector<gt::Tensor*> params;
            std::vector<gt::Tensor> grads;
            collect_mlp(tape, enc_ids, ae.encoder, params, grads);
            collect_mlp(tape, bf_ids, ae.beamformer, params, grads);
            if (phase == 1) collect_mlp(tape, pres_ids, ae.presence, params, grads);
            if (phase == 2) collect_mlp(tape, angle_ids, ae.angle, params, grads);
            collect_mlp(tape, comm_ids, ae.comm_rx, params, grads);
            adam_step(params, grads, adam, adam_cfg);
        }
    }
    return result;
}

namespace {

void write_mlp(std::ostream& os, const MlpParams& p) {
    for (size_t i = 0; i < p.w.size(); ++i) {
        for (const gt::Tensor* t : {&p.w[i], &p.b[i]}) {
            detail::write_u32_le(os, static_cast<uint32_t>(t->rows));
            detail::write_u32_le(os, static_cast<uint32_t>(t->cols));
            for (double x : t->data) detail::write_f64_le(os, x);
        }
    }
}

void read_mlp(std::istream& is, MlpParams& p) {
    for (size_t i = 0; i < p.w.size(); ++i) {
        for (gt::Tensor* t : {&p.w[i], &p.b[i]}) {
            const uint32_t rows = detail::read_u32_le(is);
            const uint32_t cols = detail::read_u32_le(is);
            if (rows != static_cast<uint32_t>(t->rows) || cols != static_cast<uint32_t>(t->cols)) {
                throw std::runtime_error("load_nnae: tensor shape mismatch");
            }
            for (double& x : t->data) {
                x = detail::read_f64_le(is);
                if (!std::isfinite(x)) throw std::runtime_error("load_nnae: non-finite entry");
            }
        }
    }
}

uint32_t mlp_tensor_count(const MlpParams& p) { return static_cast<uint32_t>(2 * p.w.size()); }

} // namespace

void save_nnae(const std::string& path, const AeParams& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_nnae: cannot open " + path);
    detail::write_magic(os, "NNAE");
    detail::write_u32_le(os, 1u);
    detail::write_u32_le(os, static_cast<uint32_t>(p.k));
    detail::write_u32_le(os, static_cast<uint32_t>(p.m));
    detail::write_u32_le(os, static_cast<uint32_t>(p.width));
    detail::write_f64_le(os, p.omega_r);
    const uint32_t count = mlp_tensor_count(p.encoder) + mlp_tensor_count(p.beamformer) +
                           mlp_tensor_count(p.presence) + mlp_tensor_count(p.angle) +
                           mlp_tensor_count(p.comm_rx);
    detail::write_u32_le(os, count);
    write_mlp(os, p.encoder);
    write_mlp(os, p.beamformer);
    write_mlp(os, p.presence);
    write_mlp(os, p.angle);
    write_mlp(os, p.comm_rx);
    if (!os) throw std::runtime_error("save_nnae: write failed for " + path);
}

AeParams load_nnae(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_nnae: cannot open " + path);
    detail::check_magic(is, "NNAE", "load_nnae: bad magic");
    if (detail::read_u32_le(is) != 1u) throw std::runtime_error("load_nnae: unsupported version");
    const int k = static_cast<int>(detail::read_u32_le(is));
    const int m = static_cast<int>(detail::read_u32_le(is));
    const int width = static_cast<int>(detail::read_u32_le(is));
    const double omega_r = detail::read_f64_le(is);
    if (k < 2 || m < 2 || width < 1) throw std::runtime_error("load_nnae: bad dimensions");

    // Zero-parameter skeleton with the right shapes, then fill from the file.
    AeParams p;
    p.k = k;
    p.m = m;
    p.width = width;
    p.omega_r = omega_r;
    Rng dummy(0);
    p.encoder = init_mlp(encoder_spec(k, m), dummy);
    p.beamformer = init_mlp(beamformer_spec(k, width), dummy);
    p.presence = init_mlp(presence_spec(k, width), dummy);
    p.angle = init_mlp(angle_spec(k, width), dummy);
    p.comm_rx = init_mlp(comm_rx_spec(k, m), dummy);

    const uint32_t count = detail::read_u32_le(is);
    const uint32_t expect = mlp_tensor_count(p.encoder) + mlp_tensor_count(p.beamformer) +
                            mlp_tensor_count(p.presence) + mlp_tensor_count(p.angle) +
                            mlp_tensor_count(p.comm_rx);
    if (count != expect) throw std::runtime_error("load_nnae: tensor count mismatch");
    read_mlp(is, p.encoder);
    read_mlp(is, p.beamformer);
    read_mlp(is, p.presence);
    read_mlp(is, p.angle);
    read_mlp(is, p.comm_rx);
    return p;
}

} // namespace isac

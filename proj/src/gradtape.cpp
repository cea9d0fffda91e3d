#include "isac/gradtape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace isac::gt {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

} // namespace

Tensor Tensor::full(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::scalar(double v) { return full(1, 1, v); }

Tensor Tensor::from(const Eigen::MatrixXd& m) {
    Tensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    t.map() = m;
    return t;
}

Id Tape::push(Tensor v, bool rg, std::function<void(Tape&, const Tensor&)> back) {
    nodes_.push_back(Node{std::move(v), rg, std::move(back)});
    return static_cast<Id>(nodes_.size()) - 1;
}

Id Tape::input(Tensor v) { return push(std::move(v), true, nullptr); }

Id Tape::constant(Tensor v) { return push(std::move(v), false, nullptr); }

void Tape::accum(Id id, const Mat& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    auto& slot = grads_[static_cast<size_t>(id)];
    if (!slot) slot = Tensor::zeros(n.value.rows, n.value.cols);
    slot->map() += g;
}

void Tape::backward(Id loss) {
    const Tensor& lv = value(loss);
    if (lv.rows != 1 || lv.cols != 1) throw std::invalid_argument("backward: loss must be scalar");
    grads_.assign(nodes_.size(), std::nullopt);
    grads_[static_cast<size_t>(loss)] = Tensor::scalar(1.0);
    for (Id i = loss; i >= 0; --i) {
        const auto& slot = grads_[static_cast<size_t>(i)];
        const Node& n = nodes_[static_cast<size_t>(i)];
        if (slot && n.back) n.back(*this, *slot);
    }
}

Tensor Tape::grad(Id id) const {
    const auto& slot = grads_.empty() ? std::optional<Tensor>{} : grads_[static_cast<size_t>(id)];
    if (slot) return *slot;
    const Tensor& v = value(id);
    return Tensor::zeros(v.rows, v.cols);
}

Id Tape::add(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.rows == vb.rows && va.cols == vb.cols, "add: shape mismatch");
    Tensor out(va.rows, va.cols);
    out.map() = va.map() + vb.map();
    const bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
        t.accum(a, g.map());
        t.accum(b, g.map());
    });
}

Id Tape::sub(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.rows == vb.rows && va.cols == vb.cols, "sub: shape mismatch");
    Tensor out(va.rows, va.cols);
    out.map() = va.map() - vb.map();
    const bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
        t.accum(a, g.map());
        t.accum(b, -g.map());
    });
}

Id Tape::mul(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.rows == vb.rows && va.cols == vb.cols, "mul: shape mismatch");
    Tensor out(va.rows, va.cols);
    out.map() = va.map().cwiseProduct(vb.map());
    const bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
        t.accum(a, g.map().cwiseProduct(t.value(b).map()));
        t.accum(b, g.map().cwiseProduct(t.value(a).map()));
    });
}

Id Tape::scale(Id a, double c) {
    const Tensor& va = value(a);
    Tensor out(va.rows, va.cols);
    out.map() = c * va.map();
    return push(std::move(out), requires_grad(a), [a, c](Tape& t, const Tensor& g) {
        t.accum(a, c * g.map());
    });
}

Id Tape::add_const(Id a, Tensor c) {
    const Tensor& va = value(a);
    require(va.rows == c.rows && va.cols == c.cols, "add_const: shape mismatch");
    Tensor out(va.rows, va.cols);
    out.map() = va.map() + c.map();
    return push(std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        t.accum(a, g.map());
    });
}

Id Tape::square(Id a) {
    const Tensor& va = value(a);
    Tensor out(va.rows, va.cols);
    out.map() = va.map().cwiseProduct(va.map());
    return push(std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        t.accum(a, 2.0 * g.map().cwiseProduct(t.value(a).map()));
    });
}

Id Tape::pow_const(Id a, double p) {
    const Tensor& va = value(a);
    Tensor out(va.rows, va.cols);
    for (int i = 0; i < va.size(); ++i) {
        require(va.data[static_cast<size_t>(i)] > 0.0, "pow_const: requires positive entries");
        out.data[static_cast<size_t>(i)] = std::pow(va.data[static_cast<size_t>(i)], p);
    }
    return push(std::move(out), requires_grad(a), [a, p](Tape& t, const Tensor& g) {
        const Tensor& va = t.value(a);
        Mat d(va.rows, va.cols);
        for (int i = 0; i < va.rows; ++i)
            for (int j = 0; j < va.cols; ++j) d(i, j) = p * std::pow(va(i, j), p - 1.0);
        t.accum(a, g.map().cwiseProduct(d));
    });
}

Id Tape::relu(Id a) {
    const Tensor& va = value(a);
    Tensor out(va.rows, va.cols);
    out.map() = va.map().cwiseMax(0.0);
    return push(std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        const auto m = t.value(a).map();
        t.accum(a, g.map().cwiseProduct((m.array() > 0.0).cast<double>().matrix()));
    });
}

Id Tape::sigmoid(Id a) {
    const Tensor& va = value(a);
    Tensor out(va.rows, va.cols);
    out.map() = (1.0 / (1.0 + (-va.map().array()).exp())).matrix();
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), requires_grad(a), [a, self](Tape& t, const Tensor& g) {
        const auto y = t.value(self).map().array();
        t.accum(a, (g.map().array() * y * (1.0 - y)).matrix());
    });
}

Id Tape::tanh_(Id a) {
    const Tensor& va = value(a);
    Tensor out(va.rows, va.cols);
    out.map() = va.map().array().tanh().matrix();
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), requires_grad(a), [a, self](Tape& t, const Tensor& g) {
        const auto y = t.value(self).map().array();
        t.accum(a, (g.map().array() * (1.0 - y * y)).matrix());
    });
}

Id Tape::log_(Id a) {
    const Tensor& va = value(a);
    require(va.size() > 0, "log: empty tensor");
    Tensor out(va.rows, va.cols);
    out.map() = va.map().array().log().matrix();
    return push(std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        t.accum(a, g.map().cwiseQuotient(t.value(a).map()));
    });
}

Id Tape::clamp_min(Id a, double lo) {
    const Tensor& va = value(a);
    Tensor out(va.rows, va.cols);
    out.map() = va.map().cwiseMax(lo);
    return push(std::move(out), requires_grad(a), [a, lo](Tape& t, const Tensor& g) {
        const auto m = t.value(a).map();
        t.accum(a, g.map().cwiseProduct((m.array() > lo).cast<double>().matrix()));
    });
}

Id Tape::elementwise_mask(Id a, Tensor mask) {
    const Tensor& va = value(a);
    const bool rowvec = mask.rows == 1 && mask.cols == va.cols && va.rows != 1;
    require(rowvec || (mask.rows == va.rows && mask.cols == va.cols),
            "elementwise_mask: mask must match shape or be a 1 x cols row vector");
    Tensor out(va.rows, va.cols);
    if (rowvec) {
        for (int i = 0; i < va.rows; ++i)
            for (int j = 0; j < va.cols; ++j) out(i, j) = va(i, j) * mask(0, j);
    } else {
        out.map() = va.map().cwiseProduct(mask.map());
    }
    auto m = std::make_shared<Tensor>(std::move(mask));
    return push(std::move(out), requires_grad(a), [a, m, rowvec](Tape& t, const Tensor& g) {
        if (rowvec) {
            Mat d(g.rows, g.cols);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) d(i, j) = g(i, j) * (*m)(0, j);
            t.accum(a, d);
        } else {
            t.accum(a, g.map().cwiseProduct(m->map()));
        }
    });
}

Id Tape::cabs(Id re, Id im) {
    const Tensor& vr = value(re);
    const Tensor& vi = value(im);
    require(vr.rows == vi.rows && vr.cols == vi.cols, "cabs: shape mismatch");
    Tensor out(vr.rows, vr.cols);
    for (int i = 0; i < vr.size(); ++i) {
        out.data[static_cast<size_t>(i)] =
            std::hypot(vr.data[static_cast<size_t>(i)], vi.data[static_cast<size_t>(i)]);
    }
    const bool rg = requires_grad(re) || requires_grad(im);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), rg, [re, im, self](Tape& t, const Tensor& g) {
        const Tensor& y = t.value(self);
        const Tensor& vr = t.value(re);
        const Tensor& vi = t.value(im);
        Mat gr(g.rows, g.cols);
        Mat gi(g.rows, g.cols);
        for (int i = 0; i < g.rows; ++i) {
            for (int j = 0; j < g.cols; ++j) {
                if (y(i, j) > 0.0) {
                    gr(i, j) = g(i, j) * vr(i, j) / y(i, j);
                    gi(i, j) = g(i, j) * vi(i, j) / y(i, j);
                } else {
                    gr(i, j) = 0.0;
                    gi(i, j) = 0.0;
                }
            }
        }
        t.accum(re, gr);
        t.accum(im, gi);
    });
}

Id Tape::matmul(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.cols == vb.rows, "matmul: inner dimensions mismatch");
    Tensor out(va.rows, vb.cols);
    out.map() = va.map() * vb.map();
    const bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
        t.accum(a, g.map() * t.value(b).map().transpose());
        t.accum(b, t.value(a).map().transpose() * g.map());
    });
}

Id Tape::transpose(Id a) {
    const Tensor& va = value(a);
    Tensor out(va.cols, va.rows);
    out.map() = va.map().transpose();
    return push(std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        t.accum(a, g.map().transpose());
    });
}

Id Tape::concat_rows(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.cols == vb.cols, "concat_rows: column mismatch");
    Tensor out(va.rows + vb.rows, va.cols);
    out.map().topRows(va.rows) = va.map();
    out.map().bottomRows(vb.rows) = vb.map();
    const bool rg = requires_grad(a) || requires_grad(b);
    const int ra = va.rows;
    const int rb = vb.rows;
    return push(std::move(out), rg, [a, b, ra, rb](Tape& t, const Tensor& g) {
        t.accum(a, g.map().topRows(ra));
        t.accum(b, g.map().bottomRows(rb));
    });
}

Id Tape::concat_cols(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.rows == vb.rows, "concat_cols: row mismatch");
    Tensor out(va.rows, va.cols + vb.cols);
    out.map().leftCols(va.cols) = va.map();
    out.map().rightCols(vb.cols) = vb.map();
    const bool rg = requires_grad(a) || requires_grad(b);
    const int ca = va.cols;
    const int cb = vb.cols;
    return push(std::move(out), rg, [a, b, ca, cb](Tape& t, const Tensor& g) {
        t.accum(a, g.map().leftCols(ca));
        t.accum(b, g.map().rightCols(cb));
    });
}

Id Tape::slice_rows(Id a, int r0, int r1) {
    const Tensor& va = value(a);
    require(0 <= r0 && r0 < r1 && r1 <= va.rows, "slice_rows: bad range");
    Tensor out(r1 - r0, va.cols);
    out.map() = va.map().middleRows(r0, r1 - r0);
    return push(std::move(out), requires_grad(a), [a, r0, r1](Tape& t, const Tensor& g) {
        const Tensor& va = t.value(a);
        Mat z = Mat::Zero(va.rows, va.cols);
        z.middleRows(r0, r1 - r0) = g.map();
        t.accum(a, z);
    });
}

Id Tape::slice_cols(Id a, int c0, int c1) {
    const Tensor& va = value(a);
    require(0 <= c0 && c0 < c1 && c1 <= va.cols, "slice_cols: bad range");
    Tensor out(va.rows, c1 - c0);
    out.map() = va.map().middleCols(c0, c1 - c0);
    return push(std::move(out), requires_grad(a), [a, c0, c1](Tape& t, const Tensor& g) {
        const Tensor& va = t.value(a);
        Mat z = Mat::Zero(va.rows, va.cols);
        z.middleCols(c0, c1 - c0) = g.map();
        t.accum(a, z);
    });
}

Id Tape::sum(Id a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::scalar(va.map().sum());
    return push(std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        const Tensor& va = t.value(a);
        t.accum(a, Mat::Constant(va.rows, va.cols, g(0, 0)));
    });
}

Id Tape::mean(Id a) {
    const Tensor& va = value(a);
    require(va.size() > 0, "mean: empty tensor");
    Tensor out = Tensor::scalar(va.map().mean());
    const double inv = 1.0 / static_cast<double>(va.size());
    return push(std::move(out), requires_grad(a), [a, inv](Tape& t, const Tensor& g) {
        const Tensor& va = t.value(a);
        t.accum(a, Mat::Constant(va.rows, va.cols, g(0, 0) * inv));
    });
}

Id Tape::row_sum(Id a) {
    const Tensor& va = value(a);
    Tensor out(va.rows, 1);
    out.map() = va.map().rowwise().sum();
    return push(std::move(out), requires_grad(a), [a](Tape& t, const Tensor& g) {
        const Tensor& va = t.value(a);
        Mat d(va.rows, va.cols);
        for (int i = 0; i < va.rows; ++i) d.row(i).setConstant(g(i, 0));
        t.accum(a, d);
    });
}

Id Tape::smul(Id a, Id s) {
    const Tensor& va = value(a);
    const Tensor& vs = value(s);
    require(vs.rows == 1 && vs.cols == 1, "smul: s must be 1x1");
    Tensor out(va.rows, va.cols);
    out.map() = vs(0, 0) * va.map();
    const bool rg = requires_grad(a) || requires_grad(s);
    return push(std::move(out), rg, [a, s](Tape& t, const Tensor& g) {
        const double sv = t.value(s)(0, 0);
        t.accum(a, sv * g.map());
        const double d = g.map().cwiseProduct(t.value(a).map()).sum();
        t.accum(s, Mat::Constant(1, 1, d));
    });
}

Id Tape::row_scale(Id a, Id v) {
    const Tensor& va = value(a);
    const Tensor& vv = value(v);
    require(vv.rows == va.rows && vv.cols == 1, "row_scale: v must be rows x 1");
    Tensor out(va.rows, va.cols);
    for (int i = 0; i < va.rows; ++i)
        for (int j = 0; j < va.cols; ++j) out(i, j) = va(i, j) * vv(i, 0);
    const bool rg = requires_grad(a) || requires_grad(v);
    return push(std::move(out), rg, [a, v](Tape& t, const Tensor& g) {
        const Tensor& va = t.value(a);
        const Tensor& vv = t.value(v);
        Mat da(va.rows, va.cols);
        Mat dv = Mat::Zero(va.rows, 1);
        for (int i = 0; i < va.rows; ++i) {
            for (int j = 0; j < va.cols; ++j) {
                da(i, j) = g(i, j) * vv(i, 0);
                dv(i, 0) += g(i, j) * va(i, j);
            }
        }
        t.accum(a, da);
        t.accum(v, dv);
    });
}

Id Tape::softmax_rows(Id a) {
    const Tensor& va = value(a);
    require(va.size() > 0, "softmax: empty tensor");
    Tensor out(va.rows, va.cols);
    for (int i = 0; i < va.rows; ++i) {
        double mx = va(i, 0);
        for (int j = 1; j < va.cols; ++j) mx = std::max(mx, va(i, j));
        double z = 0.0;
        for (int j = 0; j < va.cols; ++j) {
            out(i, j) = std::exp(va(i, j) - mx);
            z += out(i, j);
        }
        for (int j = 0; j < va.cols; ++j) out(i, j) /= z;
    }
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), requires_grad(a), [a, self](Tape& t, const Tensor& g) {
        const Tensor& y = t.value(self);
        Mat d(y.rows, y.cols);
        for (int i = 0; i < y.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < y.cols; ++j) dot += g(i, j) * y(i, j);
            for (int j = 0; j < y.cols; ++j) d(i, j) = y(i, j) * (g(i, j) - dot);
        }
        t.accum(a, d);
    });
}

Id Tape::linear_solve(Id s, Id c, double ridge_rel) {
    const Tensor& vs = value(s);
    const Tensor& vc = value(c);
    require(vs.rows == vs.cols, "linear_solve: S must be square");
    require(vs.rows == vc.rows, "linear_solve: dimension mismatch");
    const int n = vs.rows;
    Eigen::MatrixXd m = vs.eigen();
    const double ridge = ridge_rel * m.trace() / static_cast<double>(n);
    m.diagonal().array() += ridge;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    // Condition estimate from the U diagonal; coarse, but catches the
    // singular systems this contract must reject.
    const Eigen::VectorXd ud = lu.matrixLU().diagonal().cwiseAbs();
    const double umin = ud.minCoeff();
    const double umax = ud.maxCoeff();
    if (!(umin > 0.0) || !(umax / umin < 1e14) || !std::isfinite(umax)) {
        std::ostringstream msg;
        msg << "linear_solve: singular system, condition estimate "
            << (umin > 0.0 ? umax / umin : std::numeric_limits<double>::infinity());
        throw std::runtime_error(msg.str());
    }

    Tensor out(n, vc.cols);
    out.map() = lu.solve(vc.eigen());

    const bool rg = requires_grad(s) || requires_grad(c);
    const Id self = static_cast<Id>(nodes_.size());
    auto mp = std::make_shared<Eigen::MatrixXd>(std::move(m));
    return push(std::move(out), rg, [s, c, self, mp, ridge_rel, n](Tape& t, const Tensor& g) {
        const Eigen::MatrixXd gc = mp->transpose().partialPivLu().solve(g.eigen());
        t.accum(c, gc);
        if (t.requires_grad(s)) {
            const Eigen::MatrixXd x = t.value(self).eigen();
            Eigen::MatrixXd gs = -gc * x.transpose();
            const double dot = (gc.array() * x.array()).sum();
            gs.diagonal().array() -= ridge_rel / static_cast<double>(n) * dot;
            t.accum(s, gs);
        }
    });
}

// ---------------------------------------------------------------------------
// complex layer

CVar c_input(Tape& t, const Eigen::MatrixXcd& m) {
    return {t.input(Tensor::from(m.real())), t.input(Tensor::from(m.imag()))};
}

CVar c_constant(Tape& t, const Eigen::MatrixXcd& m) {
    return {t.constant(Tensor::from(m.real())), t.constant(Tensor::from(m.imag()))};
}

Eigen::MatrixXcd c_value(const Tape& t, CVar a) {
    const Tensor& re = t.value(a.re);
    const Tensor& im = t.value(a.im);
    Eigen::MatrixXcd m(re.rows, re.cols);
    m.real() = re.eigen();
    m.imag() = im.eigen();
    return m;
}

CVar c_add(Tape& t, CVar a, CVar b) { return {t.add(a.re, b.re), t.add(a.im, b.im)}; }

CVar c_sub(Tape& t, CVar a, CVar b) { return {t.sub(a.re, b.re), t.sub(a.im, b.im)}; }

CVar c_conj(Tape& t, CVar a) { return {a.re, t.scale(a.im, -1.0)}; }

CVar c_transpose(Tape& t, CVar a) { return {t.transpose(a.re), t.transpose(a.im)}; }

CVar c_matmul(Tape& t, CVar a, CVar b) {
    const Id rr = t.matmul(a.re, b.re);
    const Id ii = t.matmul(a.im, b.im);
    const Id ri = t.matmul(a.re, b.im);
    const Id ir = t.matmul(a.im, b.re);
    return {t.sub(rr, ii), t.add(ri, ir)};
}

CVar c_mul(Tape& t, CVar a, CVar b) {
    const Id rr = t.mul(a.re, b.re);
    const Id ii = t.mul(a.im, b.im);
    const Id ri = t.mul(a.re, b.im);
    const Id ir = t.mul(a.im, b.re);
    return {t.sub(rr, ii), t.add(ri, ir)};
}

CVar c_row_scale(Tape& t, CVar m, CVar v) {
    const Id rr = t.row_scale(m.re, v.re);
    const Id ii = t.row_scale(m.im, v.im);
    const Id ri = t.row_scale(m.re, v.im);
    const Id ir = t.row_scale(m.im, v.re);
    return {t.sub(rr, ii), t.add(ri, ir)};
}

CVar c_smul(Tape& t, CVar a, Id s) { return {t.smul(a.re, s), t.smul(a.im, s)}; }

CVar c_scale(Tape& t, CVar a, double c) { return {t.scale(a.re, c), t.scale(a.im, c)}; }

Id c_abs(Tape& t, CVar a) { return t.cabs(a.re, a.im); }

Id c_norm2(Tape& t, CVar a) { return t.add(t.sum(t.square(a.re)), t.sum(t.square(a.im))); }

CVar c_solve(Tape& t, CVar s, CVar c, double ridge_rel) {
    const Id neg_im = t.scale(s.im, -1.0);
    const Id top = t.concat_cols(s.re, neg_im);
    const Id bot = t.concat_cols(s.im, s.re);
    const Id block = t.concat_rows(top, bot);
    const Id rhs = t.concat_rows(c.re, c.im);
    const Id x = t.linear_solve(block, rhs, ridge_rel);
    const int n = t.value(s.re).rows;
    return {t.slice_rows(x, 0, n), t.slice_rows(x, n, 2 * n)};
}

} // namespace isac::gt

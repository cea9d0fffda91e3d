#include "isac/adam.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace isac::gt {

void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: params/grads count mismatch");
    }
    if (state.step == 0) {
        state.m.clear();
        state.v.clear();
        for (const Tensor* p : params) {
            state.m.push_back(Tensor::zeros(p->rows, p->cols));
            state.v.push_back(Tensor::zeros(p->rows, p->cols));
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state does not match parameter count");
    }

    for (size_t i = 0; i < grads.size(); ++i) {
        const Tensor& g = grads[i];
        const Tensor* p = params[i];
        if (g.rows != p->rows || g.cols != p->cols) {
            throw std::invalid_argument("adam_step: gradient shape mismatch");
        }
        for (double x : g.data) {
            if (std::isnan(x)) {
                std::ostringstream msg;
                msg << "diverged: NaN gradient in parameter " << i << " (" << g.rows << "x"
                    << g.cols << ") at step " << (state.step + 1);
                throw std::runtime_error(msg.str());
            }
        }
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const Tensor& g = grads[i];
        for (size_t j = 0; j < p.data.size(); ++j) {
            m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * g.data[j];
            v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * g.data[j] * g.data[j];
            const double mhat = m.data[j] / bc1;
            const double vhat = v.data[j] / bc2;
            p.data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

} // namespace isac::gt

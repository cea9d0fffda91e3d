#ifndef ISAC_ADAM_HPP
#define ISAC_ADAM_HPP

#include <vector>

#include "isac/gradtape.hpp"

namespace isac::gt {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-parameter moment estimates; shapes are fixed at the first step.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;
};

/// Standard bias-corrected Adam update, in place. A NaN gradient aborts the
/// run: throws std::runtime_error("diverged ...") with the parameter index.
void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

} // namespace isac::gt

#endif

#pragma once

#include "muap/image.hpp"

namespace muap {

// Weights of the gradient-energy regularizer: w1 scales the l1 form,
// w2 the squared-l2 form.
struct MiConfig {
    double w1 = 0.0;
    double w2 = 1.0;
};

// w1 * sum(|dx| + |dy|) + w2 * sum(dx^2 + dy^2) over all channels and
// pixels; forward differences, zero at the trailing row/column.
double mi_loss(const Image& q_prime, const MiConfig& cfg);

// Exact adjoint gradient of mi_loss; the l1 part uses sign(0) = 0.
Grad mi_grad(const Image& q_prime, const MiConfig& cfg);

// Squared-l2 gradient energy of one image (mi_loss with w1=0, w2=1).
double gradient_energy(const Image& img);

}  // namespace muap

#ifndef EROSEG_GRADCHECK_HPP
#define EROSEG_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "eroseg/tensor.hpp"

namespace eroseg {

// Test hook: multiplies one autodiff gradient entry before comparison so a
// broken-gradient path can be exercised end to end. Inactive by default.
struct GradFault {
    bool active = false;
    std::size_t param = 0;
    std::size_t element = 0;
    double factor = 2.0;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_element = 0;
    double worst_autodiff = 0.0;
    double worst_central = 0.0;
};

// Central-difference check of reverse-mode gradients. `fn` must rebuild the
// forward computation from the current parameter values on every call and
// return a scalar. The finite-difference side uses forward evaluation only,
// so it stays independent of the backward implementation it validates.
//
// Relative error per element: |autodiff - central| / max(1e-12, |central|).
inline GradCheckResult grad_check(const std::function<Tensor(Graph&)>& fn,
                                  const std::vector<Tensor>& params, double h,
                                  const GradFault& fault = {}) {
    if (h <= 0.0) throw ValidationError("grad_check: step h must be > 0");

    Graph g;
    Tensor out = fn(g);
    if (out.size() != 1)
        throw ContractError("grad_check: fn must return a scalar, got dims " +
                            dims_to_string(out.dims()));
    g.backward(out);

    std::vector<std::vector<double>> autodiff;
    autodiff.reserve(params.size());
    for (const Tensor& p : params) {
        if (!p.requires_grad())
            throw ContractError("grad_check: all checked parameters must require gradients");
        autodiff.emplace_back(p.grad().begin(), p.grad().end());
    }
    if (fault.active) autodiff.at(fault.param).at(fault.element) *= fault.factor;

    auto eval = [&fn]() {
        Graph scratch;
        Tensor v = fn(scratch);
        if (v.size() != 1) throw ContractError("grad_check: fn must return a scalar");
        return v[0];
    };

    GradCheckResult r;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p[i];
            p[i] = orig + h;
            const double fp = eval();
            p[i] = orig - h;
            const double fm = eval();
            p[i] = orig;
            const double central = (fp - fm) / (2.0 * h);
            const double rel =
                std::abs(autodiff[pi][i] - central) / std::max(1e-12, std::abs(central));
            if (rel > r.max_rel_err) {
                r.max_rel_err = rel;
                r.worst_param = pi;
                r.worst_element = i;
                r.worst_autodiff = autodiff[pi][i];
                r.worst_central = central;
            }
        }
    }
    return r;
}

}  // namespace eroseg

#endif  // EROSEG_GRADCHECK_HPP

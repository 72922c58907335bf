// SPDX-License-Identifier: Apache-2.0

#ifndef IXN_GRADCHECK_HPP
#define IXN_GRADCHECK_HPP

#include <functional>

#include "ixn/autodiff.hpp"

namespace ixn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<double> per_input; // max relative error per checked input
    int64_t elements_checked = 0;

    bool passed(double tol) const { return max_rel_err < tol; }
};

// Compares analytic gradients against central finite differences at 64-bit.
// build receives leaf Values for the given inputs and returns a scalar.
// Relative error uses denominator max(1, |analytic|, |numeric|) so tiny
// gradients are compared absolutely.
inline GradCheckReport gradcheck(
    const std::function<Value<double>(const std::vector<Value<double>>&)>& build,
    std::vector<Tensor<double>> inputs, double h = 1e-5, const std::vector<bool>& check_input = {}) {
    GradCheckReport report;
    report.per_input.assign(inputs.size(), 0.0);

    // analytic pass
    std::vector<Value<double>> leaves;
    leaves.reserve(inputs.size());
    for (auto& t : inputs) leaves.push_back(Value<double>::leaf(t, true));
    Value<double> out = build(leaves);
    if (out.numel() != 1)
        throw ShapeError(strcat_("gradcheck: build must return a scalar, got shape ",
                                 shape_str(out.shape())));
    backward(out);
    std::vector<Tensor<double>> analytic;
    for (auto& l : leaves)
        analytic.push_back(l.grad().empty() ? Tensor<double>::zeros(l.shape()) : l.grad());

    // numeric pass
    auto eval = [&](const std::vector<Tensor<double>>& ts) {
        NoGradGuard ng;
        std::vector<Value<double>> vs;
        vs.reserve(ts.size());
        for (const auto& t : ts) vs.push_back(Value<double>::constant(t));
        return build(vs).item();
    };
    for (size_t k = 0; k < inputs.size(); ++k) {
        if (!check_input.empty() && !check_input[k]) continue;
        for (int64_t i = 0; i < inputs[k].numel(); ++i) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double fp = eval(inputs);
            inputs[k][i] = orig - h;
            const double fm = eval(inputs);
            inputs[k][i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[k][i];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            report.per_input[k] = std::max(report.per_input[k], rel);
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.elements_checked;
        }
    }
    return report;
}

} // namespace ixn

#endif // IXN_GRADCHECK_HPP

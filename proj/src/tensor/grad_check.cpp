#include "hydra/tensor/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace hydra::ad {

namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
    NoGradGuard guard;
    const Tensor out = fn(inputs);
    if (out.numel() != 1) throw ShapeError("grad_check: fn must return a scalar");
    return out.item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double eps, double tol) {
    auto& tape = Tape::current();
    tape.clear();
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
    }

    const double f0 = evaluate(fn, inputs);
    if (evaluate(fn, inputs) != f0) {
        throw std::runtime_error("grad_check: fn is not deterministic");
    }

    const Tensor loss = fn(inputs);
    if (tape.size() > 0) backward(loss);
    tape.clear();

    GradCheckReport report;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto values = inputs[t].mutable_data();
        const auto grads = inputs[t].grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double plus = evaluate(fn, inputs);
            values[i] = saved - eps;
            const double minus = evaluate(fn, inputs);
            values[i] = saved;

            const double numeric = (plus - minus) / (2.0 * eps);
            const double analytic = grads.empty() ? 0.0 : grads[i];
            const double rel = std::fabs(analytic - numeric) /
                               (std::fabs(analytic) + std::fabs(numeric) + 1e-9);
            ++report.checked;
            if (rel > report.max_rel_error || report.checked == 1) {
                report.max_rel_error = rel;
                report.worst_input = t;
                report.worst_element = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    report.pass = report.max_rel_error <= tol;
    return report;
}

}  // namespace hydra::ad

#pragma once

#include <string>
#include <vector>

#include "cpgan/graph.hpp"
#include "cpgan/ops.hpp"

namespace cpgan {

template <typename T>
struct GradCheckReport {
  bool pass = true;
  // Max relative error seen in each parameter tensor, same order as passed.
  std::vector<T> max_rel_err;
  std::string detail;
};

// Compares reverse-mode gradients of the scalar f() against central
// differences, parameter by parameter. f reads the passed tensors and must be
// deterministic; call in 64-bit mode, finite differences are not trustworthy
// in 32-bit.
template <typename T, typename F>
GradCheckReport<T> grad_check(F f, std::vector<Tensor<T>> params, T h, T tol) {
  GradCheckReport<T> report;
  report.max_rel_err.assign(params.size(), T(0));
  for (auto& p : params)
    if (!p.requires_grad()) p.set_requires_grad(true);

  std::vector<std::vector<T>> analytic;
  {
    Graph<T> tape;
    typename Graph<T>::Scope scope(tape);
    Tensor<T> loss = f();
    require(loss.numel() == 1, "grad_check: f must return a scalar, got ",
            shape_str(loss.shape()));
    if (!std::isfinite((double)loss.item())) {
      report.pass = false;
      report.detail = "non-finite loss at base point";
      return report;
    }
    tape.backward(loss);
    for (auto& p : params) analytic.push_back(p.grad());
    tape.clear();
  }

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& p = params[pi];
    for (index_t i = 0; i < p.numel(); ++i) {
      T saved = p.data()[i];
      p.data()[i] = saved + h;
      T fp = f().item();
      p.data()[i] = saved - h;
      T fm = f().item();
      p.data()[i] = saved;
      if (!std::isfinite((double)fp) || !std::isfinite((double)fm)) {
        report.pass = false;
        report.detail = str_cat("non-finite probe at param ", pi, " elem ", i);
        return report;
      }
      T numeric = (fp - fm) / (2 * h);
      T a = analytic[pi][(std::size_t)i];
      T denom = std::max(std::max(std::abs(a), std::abs(numeric)), T(1e-8));
      T rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err[pi]) report.max_rel_err[pi] = rel;
      if (rel > tol && report.pass) {
        report.pass = false;
        report.detail = str_cat("param ", pi, " elem ", i, ": analytic ", a,
                                " vs numeric ", numeric, " rel err ", rel);
      }
    }
  }
  return report;
}

}  // namespace cpgan

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "epireader/tensor.hpp"

namespace epi {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // one per input tensor, input order
  double epsilon = 0.0;
  double tolerance = 0.0;
  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
};

// Compares the analytic gradients of scalar `f` against central finite
// differences (f(x+eps) - f(x-eps)) / 2eps, elementwise over every listed
// input. The error metric is |fd - analytic| / max(1, |fd|, |analytic|).
//
// `f` must be deterministic; a re-evaluation mismatch throws NumericError.
// Every input must have requires_grad set.
GradCheckReport grad_check(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor>>& inputs, double epsilon,
    double tolerance);

}  // namespace epi

#include "epireader/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace epi {

GradCheckReport grad_check(
    const std::function<Tensor()>& f,
    const std::vector<std::pair<std::string, Tensor>>& inputs, double epsilon,
    double tolerance) {
  if (epsilon <= 0) {
    throw ConfigError("grad_check: epsilon must be positive");
  }
  for (const auto& [name, t] : inputs) {
    if (!t.requires_grad()) {
      throw ConfigError("grad_check: input '" + name +
                        "' does not require grad");
    }
  }

  const Scalar probe1 = f().item();
  const Scalar probe2 = f().item();
  if (probe1 != probe2) {
    throw NumericError(
        "grad_check: oracle invalid, function is non-deterministic");
  }

  // Analytic pass.
  std::vector<std::vector<Scalar>> analytic;
  {
    for (const auto& [name, t] : inputs) const_cast<Tensor&>(t).zero_grad();
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  for (const auto& [name, t] : inputs) {
    analytic.push_back(t.has_grad() ? t.grad()
                                    : std::vector<Scalar>(t.size(), 0.0));
  }

  GradCheckReport report;
  report.epsilon = epsilon;
  report.tolerance = tolerance;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor t = inputs[k].second;
    GradCheckEntry entry;
    entry.name = inputs[k].first;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const Scalar original = t.at(i);
      t.at(i) = original + epsilon;
      const Scalar up = f().item();
      t.at(i) = original - epsilon;
      const Scalar down = f().item();
      t.at(i) = original;
      const Scalar fd = (up - down) / (2.0 * epsilon);
      const Scalar an = analytic[k][i];
      const Scalar rel =
          std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    entry.pass = entry.max_rel_err <= tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace epi

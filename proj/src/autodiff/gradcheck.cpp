// SPDX-License-Identifier: Apache-2.0
#include "padmae/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace padmae::ad {

namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape;
  return loss(tape).value().item();
}

}  // namespace

GradCheckReport finite_difference_check(std::span<Param* const> params, const LossBuilder& loss,
                                        const GradCheckOptions& options) {
  const double first = evaluate(loss);
  const double second = evaluate(loss);
  if (first != second) {
    std::ostringstream os;
    os.precision(17);
    os << "finite_difference_check: loss is not deterministic (" << first << " vs " << second
       << ")";
    throw std::runtime_error(os.str());
  }

  for (Param* p : params) p->zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }

  GradCheckReport report;
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + options.step;
      const double plus = evaluate(loss);
      p->value[i] = saved - options.step;
      const double minus = evaluate(loss);
      p->value[i] = saved;

      GradCheckEntry e;
      e.param = p->name;
      e.index = i;
      e.trainable = p->trainable;
      e.analytic = p->grad[i];
      e.numeric = (plus - minus) / (2.0 * options.step);
      const double denom =
          std::max({std::abs(e.analytic), std::abs(e.numeric), options.denom_floor});
      e.rel_error = std::abs(e.analytic - e.numeric) / denom;
      if (e.trainable) {
        ++report.checked;
        if (report.worst_param.empty() || e.rel_error > report.max_rel_error) {
          report.max_rel_error = e.rel_error;
          report.worst_param = e.param;
          report.worst_index = e.index;
        }
      }
      report.entries.push_back(std::move(e));
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace padmae::ad

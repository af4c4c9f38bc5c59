/*
 * Copyright 2026 The milsed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "milsed/grad_check.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace milsed {

namespace {

struct Evaluation {
  double loss;
  bool tie;
};

Evaluation evaluate(const LossBuilder& build, double tie_tolerance) {
  Graph g(tie_tolerance);
  Var loss = build(g);
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("grad_check: loss must be scalar (1x1), got " +
                     shape_string(loss.value()));
  }
  return {loss.value()(0, 0), g.tie_detected()};
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, ParameterSet& params, double step,
                           double rel_tol) {
  if (!(step > 0.0 && step <= 1e-2)) {
    throw Error("grad_check: step must lie in (0, 1e-2]");
  }
  const double tie_tol = 10.0 * step;

  params.zero_grad();
  bool base_tie = false;
  {
    Graph g(tie_tol);
    Var loss = build(g);
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw ShapeError("grad_check: loss must be scalar (1x1), got " +
                       shape_string(loss.value()));
    }
    g.backward(loss);
    base_tie = g.tie_detected();
  }

  GradCheckReport report;
  for (Parameter& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    if (!p.trainable) {
      entry.status = GradCheckStatus::kSkipped;
      report.entries.push_back(entry);
      continue;
    }
    bool tie = base_tie;
    const Matrix analytic = p.grad;
    for (Index i = 0; i < p.value.size(); ++i) {
      const double saved = p.value(i);
      p.value(i) = saved + step;
      const Evaluation plus = evaluate(build, tie_tol);
      p.value(i) = saved - step;
      const Evaluation minus = evaluate(build, tie_tol);
      p.value(i) = saved;
      tie = tie || plus.tie || minus.tie;
      const double numeric = (plus.loss - minus.loss) / (2.0 * step);
      const double abs_err = std::abs(analytic(i) - numeric);
      const double rel_err = abs_err / std::max(std::abs(numeric), 1e-8);
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, rel_err);
    }
    if (tie) {
      entry.status = GradCheckStatus::kUnreliableAtTie;
    } else {
      report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
      if (entry.max_rel_error > rel_tol) {
        report.passed = false;
      }
    }
    report.entries.push_back(entry);
  }
  params.zero_grad();
  return report;
}

std::string to_string(const GradCheckReport& report) {
  std::ostringstream os;
  for (const GradCheckEntry& e : report.entries) {
    os << e.name << ": ";
    switch (e.status) {
      case GradCheckStatus::kSkipped:
        os << "skipped (frozen)";
        break;
      case GradCheckStatus::kUnreliableAtTie:
        os << "unreliable-at-tie (rel " << e.max_rel_error << ")";
        break;
      case GradCheckStatus::kChecked:
        os << "rel " << e.max_rel_error << " abs " << e.max_abs_error;
        break;
    }
    os << '\n';
  }
  os << (report.passed ? "PASS" : "FAIL") << " max_rel " << report.max_rel_error << '\n';
  return os.str();
}

}  // namespace milsed

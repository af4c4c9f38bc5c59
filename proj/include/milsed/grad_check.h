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

#pragma once

#include "milsed/graph.h"

#include <functional>
#include <string>
#include <vector>

namespace milsed {

/// Builds a scalar loss on `graph`, binding parameters via Graph::parameter.
using LossBuilder = std::function<Var(Graph& graph)>;

enum class GradCheckStatus { kChecked, kSkipped, kUnreliableAtTie };

struct GradCheckEntry {
  std::string name;
  GradCheckStatus status = GradCheckStatus::kChecked;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;  // over checked entries only
  bool passed = true;
};

/// Compares reverse-mode gradients against central differences.
///
/// Relative error per coordinate is |analytic - numeric| / max(|numeric|, 1e-8).
/// Frozen parameters are reported as skipped. A parameter whose perturbed
/// evaluations hit a max-reduce tie (within 10 * step) is reported as
/// unreliable and does not affect `passed`.
GradCheckReport grad_check(const LossBuilder& build, ParameterSet& params, double step = 1e-5,
                           double rel_tol = 1e-4);

std::string to_string(const GradCheckReport& report);

}  // namespace milsed

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

#include "milsed/numerics.h"

namespace milsed {

std::string shape_string(Index rows, Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

Parameter& ParameterSet::add(std::string name, Matrix value, bool trainable) {
  if (index_.count(name) != 0) {
    throw Error("parameter '" + name + "' already defined");
  }
  index_.emplace(name, params_.size());
  Parameter& p = params_.emplace_back();
  p.name = std::move(name);
  p.value = std::move(value);
  p.trainable = trainable;
  p.zero_grad();
  return p;
}

bool ParameterSet::contains(std::string_view name) const {
  return index_.find(name) != index_.end();
}

Parameter& ParameterSet::at(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw Error("unknown parameter '" + std::string(name) + "'");
  }
  return params_[it->second];
}

const Parameter& ParameterSet::at(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw Error("unknown parameter '" + std::string(name) + "'");
  }
  return params_[it->second];
}

void ParameterSet::zero_grad() {
  for (Parameter& p : params_) {
    p.zero_grad();
  }
}

void ParameterSet::assign_values(const ParameterSet& other) {
  if (other.size() != size()) {
    throw Error("parameter sets differ in size");
  }
  for (const Parameter& src : other) {
    Parameter& dst = at(src.name);
    if (dst.value.rows() != src.value.rows() || dst.value.cols() != src.value.cols()) {
      throw ShapeError("parameter '" + src.name + "': " + shape_string(dst.value) + " vs " +
                       shape_string(src.value));
    }
    dst.value = src.value;
  }
}

bool ParameterSet::values_equal(const ParameterSet& other) const {
  if (other.size() != size()) {
    return false;
  }
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->name != b->name || a->trainable != b->trainable ||
        a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols() ||
        a->value != b->value) {
      return false;
    }
  }
  return true;
}

}  // namespace milsed

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

#include "milsed/pooling.h"

namespace milsed {

std::string PoolingSpec::name() const {
  std::string s = level == PoolingLevel::kInstance ? "i" : "e";
  switch (kind) {
    case PoolingKind::kGmp: return s + "gmp";
    case PoolingKind::kGap: return s + "gap";
    case PoolingKind::kGsp: return s + "gsp";
    case PoolingKind::kAtp: return s + "atp";
  }
  return s;
}

PoolingSpec PoolingSpec::parse(std::string_view name) {
  PoolingSpec spec;
  if (name.size() != 4 || (name[0] != 'i' && name[0] != 'e')) {
    throw Error("unknown pooling '" + std::string(name) +
                "' (igmp|igap|igsp|iatp|egmp|egap|egsp|eatp)");
  }
  spec.level = name[0] == 'i' ? PoolingLevel::kInstance : PoolingLevel::kEmbedding;
  const std::string_view kind = name.substr(1);
  if (kind == "gmp") {
    spec.kind = PoolingKind::kGmp;
  } else if (kind == "gap") {
    spec.kind = PoolingKind::kGap;
  } else if (kind == "gsp") {
    spec.kind = PoolingKind::kGsp;
  } else if (kind == "atp") {
    spec.kind = PoolingKind::kAtp;
  } else {
    throw Error("unknown pooling '" + std::string(name) +
                "' (igmp|igap|igsp|iatp|egmp|egap|egsp|eatp)");
  }
  return spec;
}

}  // namespace milsed

/*
 * Copyright 2026 The fedlora Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fedlora/objective.hpp"

#include "fedlora/error.hpp"

namespace fedlora {

Mat GlobalModel::effective_weight() const {
  Mat w = effective_update(adapter);
  if (!base.empty()) w += base;
  return w;
}

Mat LocalObjective::exact_b(const GlobalModel&) const {
  throw Error(ErrorKind::kBadSpec, "this objective has no closed-form B solver");
}

}  // namespace fedlora

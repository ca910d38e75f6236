// Copyright 2026 The ctssl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "ctssl/autonet.hpp"

namespace ctssl::testing {

// One evaluation of a scalar objective plus the leaky relu sign pattern the
// evaluation went through.
struct Sample {
  double loss = 0.0;
  std::vector<char> pattern;
};

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::size_t refined = 0;   // entries whose step had to shrink to avoid a kink
  std::size_t unchecked = 0; // entries sitting on a kink even at the smallest step
};

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdMinStep = 1e-8;
// Relative errors are taken against max(|analytic|, |numeric|, kFdFloor).
// Central differences at h = 1e-5 carry about 1e-10 of rounding noise on
// O(1) objectives, so exactly-zero gradients (a bias feeding batchnorm) need
// a floor well above that.
inline constexpr double kFdFloor = 1e-5;

// Central differences over every entry of `params`, compared with `analytic`
// (aligned with `params`). A step whose +h and -h evaluations see different
// sign patterns straddles a kink of the objective; only those entries are
// retried with a step ten times smaller.
inline GradCheck check_gradients(const std::vector<autonet::Tensor*>& params,
                                 const std::vector<autonet::Tensor>& analytic,
                                 const std::function<Sample()>& eval) {
  GradCheck out;
  const Sample base = eval();
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& values = params[t]->data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double original = values[k];
      double h = kFdStep;
      double numeric = 0.0;
      bool clean = false;
      for (; h >= kFdMinStep; h /= 10.0) {
        values[k] = original + h;
        const Sample plus = eval();
        values[k] = original - h;
        const Sample minus = eval();
        numeric = (plus.loss - minus.loss) / (2.0 * h);
        if (plus.pattern == base.pattern && minus.pattern == base.pattern) {
          clean = true;
          break;
        }
      }
      values[k] = original;
      ++out.entries;
      if (!clean) {
        ++out.unchecked;
        continue;
      }
      if (h < kFdStep) ++out.refined;
      const double a = analytic[t].data()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), kFdFloor});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
    }
  }
  return out;
}

}  // namespace ctssl::testing

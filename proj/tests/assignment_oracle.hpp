// Copyright 2026 The hamalign Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Exhaustive minimum over all injections of columns into rows.

#include <cstddef>
#include <limits>
#include <vector>

namespace hamalign::test {

class BruteForceAssignment {
 public:
  BruteForceAssignment(const std::vector<double>& cost, std::size_t rows, std::size_t cols)
      : cost_(cost), rows_(rows), cols_(cols), used_(rows, false) {}

  double minimum() {
    best_ = std::numeric_limits<double>::infinity();
    recurse(0, 0.0);
    return best_;
  }

 private:
  void recurse(std::size_t col, double acc) {
    if (col == cols_) {
      if (acc < best_) best_ = acc;
      return;
    }
    for (std::size_t r = 0; r < rows_; ++r) {
      if (used_[r]) continue;
      used_[r] = true;
      recurse(col + 1, acc + cost_[r * cols_ + col]);
      used_[r] = false;
    }
  }

  const std::vector<double>& cost_;
  std::size_t rows_, cols_;
  std::vector<bool> used_;
  double best_ = 0.0;
};

inline double brute_force_min(const std::vector<double>& cost, std::size_t rows, std::size_t cols) {
  return BruteForceAssignment(cost, rows, cols).minimum();
}

}  // namespace hamalign::test

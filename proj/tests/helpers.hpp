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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ctssl/geometry.hpp"

namespace ctssl::testing {

inline PointCloud random_cloud(std::size_t n, std::size_t d, std::uint64_t seed,
                               const std::string& id = "random") {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> coords(n * d);
  for (auto& v : coords) v = u(rng);
  return PointCloud(id, d, std::move(coords));
}

inline double euclid(const double* a, const double* b, std::size_t d) {
  long double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += (static_cast<long double>(a[k]) - b[k]) * (a[k] - b[k]);
  return static_cast<double>(std::sqrt(s));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ctssl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ctssl::testing

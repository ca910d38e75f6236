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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctssl/autonet.hpp"
#include "ctssl/geometry.hpp"

namespace ctssl {

/// Surface primitives of the desk-scale dataset, in class-label order.
enum class Primitive { Sphere, Cube, Cylinder, Cone, Torus, Plane };

constexpr std::size_t kPrimitiveCount = 6;
const char* to_string(Primitive p);

struct ShapeSample {
  std::vector<double> coords;  // row-major, 3 columns
  std::array<double, 3> center{};
};

/// Samples `points` surface points of a unit-sized primitive (sphere radius
/// 0.5) under a random rotation and translation, with per-instance aspect
/// jitter for everything but the sphere, plus isotropic Gaussian noise of
/// standard deviation `noise`.
ShapeSample sample_shape(Primitive p, std::size_t points, double noise, autonet::Rng& rng);

struct SynthOptions {
  std::size_t classes = 6;
  std::size_t per_class = 40;
  std::size_t points = 256;
  double noise = 0.01;
  std::uint64_t seed = 1;
};

/// Writes one xyz file per cloud plus manifest.json into `out_dir`.
/// Classes are labeled 1..classes.
Manifest synthesize(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace ctssl

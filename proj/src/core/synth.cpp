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

#include "ctssl/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "ctssl/error.hpp"

namespace ctssl {

const char* to_string(Primitive p) {
  switch (p) {
    case Primitive::Sphere: return "sphere";
    case Primitive::Cube: return "cube";
    case Primitive::Cylinder: return "cylinder";
    case Primitive::Cone: return "cone";
    case Primitive::Torus: return "torus";
    case Primitive::Plane: return "plane";
  }
  return "unknown";
}

namespace {

constexpr double kPi = std::numbers::pi;

double gaussian(autonet::Rng& rng) {
  // Box-Muller; 1 - u keeps the log argument positive
  const double u = 1.0 - rng.uniform();
  const double v = rng.uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * kPi * v);
}

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

Mat3 random_rotation(autonet::Rng& rng) {
  double q[4];
  double norm = 0.0;
  for (double& c : q) {
    c = gaussian(rng);
    norm += c * c;
  }
  norm = std::sqrt(norm);
  for (double& c : q) c /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

Vec3 surface_point(Primitive p, autonet::Rng& rng, const Vec3& aspect) {
  switch (p) {
    case Primitive::Sphere: {
      Vec3 d{gaussian(rng), gaussian(rng), gaussian(rng)};
      const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      return {0.5 * d[0] / n, 0.5 * d[1] / n, 0.5 * d[2] / n};
    }
    case Primitive::Cube: {
      // faces chosen proportionally to their area
      const double a = aspect[0], b = aspect[1], c = aspect[2];
      const double areas[3] = {b * c, a * c, a * b};
      const double total = areas[0] + areas[1] + areas[2];
      double pick = rng.uniform() * total;
      int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
      Vec3 out{a * (rng.uniform() - 0.5), b * (rng.uniform() - 0.5), c * (rng.uniform() - 0.5)};
      out[axis] = aspect[axis] * (rng.uniform() < 0.5 ? -0.5 : 0.5);
      return out;
    }
    case Primitive::Cylinder: {
      const double r = 0.5, h = aspect[0];
      const double side = 2 * kPi * r * h, cap = kPi * r * r;
      const double pick = rng.uniform() * (side + 2 * cap);
      const double t = 2 * kPi * rng.uniform();
      if (pick < side) return {r * std::cos(t), r * std::sin(t), h * (rng.uniform() - 0.5)};
      const double rr = r * std::sqrt(rng.uniform());
      return {rr * std::cos(t), rr * std::sin(t), pick < side + cap ? -h / 2 : h / 2};
    }
    case Primitive::Cone: {
      const double r = 0.5, h = aspect[0];
      const double slant = std::sqrt(r * r + h * h);
      const double side = kPi * r * slant, base = kPi * r * r;
      const double t = 2 * kPi * rng.uniform();
      if (rng.uniform() * (side + base) < side) {
        // radius grows linearly towards the base; sqrt gives uniform area
        const double s = std::sqrt(rng.uniform());
        return {s * r * std::cos(t), s * r * std::sin(t), h / 2 - s * h};
      }
      const double rr = r * std::sqrt(rng.uniform());
      return {rr * std::cos(t), rr * std::sin(t), -h / 2};
    }
    case Primitive::Torus: {
      const double big = 0.5, small = aspect[0];
      // rejection on the tube angle for uniform area density
      double u = 0.0, v = 0.0;
      while (true) {
        u = 2 * kPi * rng.uniform();
        v = 2 * kPi * rng.uniform();
        if (rng.uniform() * (big + small) <= big + small * std::cos(v)) break;
      }
      const double ring = big + small * std::cos(v);
      return {ring * std::cos(u), ring * std::sin(u), small * std::sin(v)};
    }
    case Primitive::Plane:
      return {aspect[0] * (rng.uniform() - 0.5), aspect[1] * (rng.uniform() - 0.5), 0.0};
  }
  return {0, 0, 0};
}

Vec3 draw_aspect(Primitive p, autonet::Rng& rng) {
  switch (p) {
    case Primitive::Sphere: return {1, 1, 1};
    case Primitive::Cube:
      return {rng.uniform(0.7, 1.3), rng.uniform(0.7, 1.3), rng.uniform(0.7, 1.3)};
    case Primitive::Cylinder:
    case Primitive::Cone: return {rng.uniform(0.8, 1.6), 0, 0};
    case Primitive::Torus: return {rng.uniform(0.12, 0.25), 0, 0};
    case Primitive::Plane: return {1.0, rng.uniform(0.6, 1.4), 0};
  }
  return {1, 1, 1};
}

}  // namespace

ShapeSample sample_shape(Primitive p, std::size_t points, double noise, autonet::Rng& rng) {
  const Vec3 aspect = draw_aspect(p, rng);
  const Mat3 rot = random_rotation(rng);
  ShapeSample out;
  for (double& c : out.center) c = rng.uniform(-1.0, 1.0);
  out.coords.reserve(points * 3);
  for (std::size_t i = 0; i < points; ++i) {
    const Vec3 local = surface_point(p, rng, aspect);
    for (std::size_t r = 0; r < 3; ++r) {
      double v = out.center[r];
      for (std::size_t c = 0; c < 3; ++c) v += rot[r][c] * local[c];
      if (noise > 0.0) v += noise * gaussian(rng);
      out.coords.push_back(v);
    }
  }
  return out;
}

Manifest synthesize(const SynthOptions& options, const std::filesystem::path& out_dir) {
  if (options.classes < 1 || options.classes > kPrimitiveCount)
    fail(ErrorKind::Argument, "classes must be in 1.." + std::to_string(kPrimitiveCount));
  if (options.per_class < 1 || options.points < 1)
    fail(ErrorKind::Argument, "per_class and points must be positive");
  if (options.noise < 0.0) fail(ErrorKind::Argument, "noise must be non-negative");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create '" + out_dir.string() + "': " + ec.message());

  Manifest manifest;
  manifest.base_dir = out_dir;
  for (std::size_t c = 0; c < options.classes; ++c) {
    const auto prim = static_cast<Primitive>(c);
    for (std::size_t i = 0; i < options.per_class; ++i) {
      autonet::Rng rng(autonet::derive_seed(options.seed, c * options.per_class + i));
      auto sample = sample_shape(prim, options.points, options.noise, rng);
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%03zu.xyz", to_string(prim), i);
      save_xyz(PointCloud(name, 3, std::move(sample.coords)), out_dir / name);
      manifest.entries.push_back({name, static_cast<int>(c + 1)});
    }
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace ctssl

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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ctssl {

/// An ordered set of d-dimensional points, stored row-major.
///
/// Coordinates are unitless once normalize_unit_cube() has been applied. The
/// optional class label lives in {1..K}; part labels, when present, hold one
/// integer per point.
class PointCloud {
 public:
  PointCloud() = default;
  PointCloud(std::string id, std::size_t dim, std::vector<double> coords,
             std::optional<int> class_label = std::nullopt,
             std::optional<std::vector<int>> part_labels = std::nullopt);

  const std::string& id() const noexcept { return id_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  const std::vector<double>& coords() const noexcept { return coords_; }

  const std::optional<int>& class_label() const noexcept { return class_label_; }
  const std::optional<std::vector<int>>& part_labels() const noexcept {
    return part_labels_;
  }

  void set_id(std::string id) { id_ = std::move(id); }
  void set_class_label(std::optional<int> label) { class_label_ = label; }

 private:
  std::string id_;
  std::size_t dim_ = 0;
  std::vector<double> coords_;
  std::optional<int> class_label_;
  std::optional<std::vector<int>> part_labels_;
};

double distance(std::span<const double> a, std::span<const double> b);

/// One labeled entry of a dataset manifest.
struct ManifestEntry {
  std::string path;  // as written in the manifest
  int class_label = 0;
};

struct Manifest {
  std::filesystem::path base_dir;  // relative entry paths resolve against this
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const;
};

/// Parses xyz text: one point per line, optional trailing integer part label,
/// '#' comments and blank lines ignored. The cloud id is the file stem.
PointCloud load_xyz(const std::filesystem::path& path);
PointCloud parse_xyz(const std::string& text, const std::string& id);

/// Loads a manifest entry; id is the entry path, class label attached.
PointCloud load_cloud(const Manifest& manifest, const ManifestEntry& entry);

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

void save_xyz(const PointCloud& cloud, const std::filesystem::path& path);

/// Translate by the per-axis minimum, then divide every axis by the largest
/// axis extent. A degenerate cloud maps to the origin.
PointCloud normalize_unit_cube(const PointCloud& cloud);

/// Uniform sample of k points without replacement, kept in original order.
PointCloud subsample(const PointCloud& cloud, std::size_t k, std::uint64_t seed);

}  // namespace ctssl

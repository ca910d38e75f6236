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

#include "ctssl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ctssl/error.hpp"

namespace ctssl {

PointCloud::PointCloud(std::string id, std::size_t dim, std::vector<double> coords,
                       std::optional<int> class_label,
                       std::optional<std::vector<int>> part_labels)
    : id_(std::move(id)),
      dim_(dim),
      coords_(std::move(coords)),
      class_label_(class_label),
      part_labels_(std::move(part_labels)) {
  if (dim_ < 2) fail(ErrorKind::Argument, "point dimension must be at least 2");
  if (coords_.empty()) fail(ErrorKind::Data, "point cloud '" + id_ + "' is empty");
  if (coords_.size() % dim_ != 0)
    fail(ErrorKind::Argument, "coordinate count is not a multiple of the dimension");
  if (part_labels_ && part_labels_->size() != size())
    fail(ErrorKind::Argument, "part label count does not match point count");
}

double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    fail(ErrorKind::Shape, "distance between points of dimension " + std::to_string(a.size()) +
                               " and " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return std::sqrt(s);
}

std::filesystem::path Manifest::resolve(const ManifestEntry& e) const {
  std::filesystem::path p(e.path);
  return p.is_absolute() ? p : base_dir / p;
}

PointCloud parse_xyz(const std::string& text, const std::string& id) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool labeled = false;
  std::vector<double> coords;
  std::vector<int> labels;

  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;

    std::vector<std::string> tokens;
    std::istringstream fields(line);
    for (std::string tok; fields >> tok;) tokens.push_back(tok);

    std::vector<double> values;
    values.reserve(tokens.size());
    for (const auto& tok : tokens) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size())
        fail(ErrorKind::Parse, id + ": line " + std::to_string(line_no) +
                                   ": malformed number '" + tok + "'");
      values.push_back(v);
    }

    if (dim == 0) {
      // A trailing integer after at least three coordinates is read as a part
      // label; two- or three-column rows are pure coordinates.
      const auto is_int = [](const std::string& t) {
        return t.find_first_of(".eE") == std::string::npos;
      };
      labeled = values.size() >= 4 && is_int(tokens.back());
      dim = labeled ? values.size() - 1 : values.size();
      if (dim < 2)
        fail(ErrorKind::Parse,
             id + ": line " + std::to_string(line_no) + ": need at least 2 coordinates");
    }
    const std::size_t expect = dim + (labeled ? 1 : 0);
    if (values.size() != expect)
      fail(ErrorKind::Parse, id + ": line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(expect) + " columns, found " +
                                 std::to_string(values.size()));
    coords.insert(coords.end(), values.begin(), values.begin() + static_cast<long>(dim));
    if (labeled) labels.push_back(static_cast<int>(values.back()));
  }

  if (coords.empty()) fail(ErrorKind::Data, id + ": empty point cloud");
  std::optional<std::vector<int>> parts;
  if (labeled) parts = std::move(labels);
  return PointCloud(id, dim, std::move(coords), std::nullopt, std::move(parts));
}

static std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PointCloud load_xyz(const std::filesystem::path& path) {
  return parse_xyz(read_file(path), path.stem().string());
}

PointCloud load_cloud(const Manifest& manifest, const ManifestEntry& entry) {
  PointCloud cloud = parse_xyz(read_file(manifest.resolve(entry)), entry.path);
  cloud.set_class_label(entry.class_label);
  return cloud;
}

Manifest load_manifest(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) fail(ErrorKind::Parse, path.string() + ": manifest must be a JSON array");

  Manifest m;
  m.base_dir = path.parent_path();
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("path") || !item.contains("class") ||
        !item["path"].is_string() || !item["class"].is_number_integer())
      fail(ErrorKind::Parse, path.string() + ": entries need {\"path\": string, \"class\": integer}");
    m.entries.push_back({item["path"].get<std::string>(), item["class"].get<int>()});
  }
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : manifest.entries) doc.push_back({{"path", e.path}, {"class", e.class_label}});
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << doc.dump(1) << '\n';
}

void save_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    for (std::size_t k = 0; k < p.size(); ++k) out << (k ? " " : "") << p[k];
    if (cloud.part_labels()) out << ' ' << (*cloud.part_labels())[i];
    out << '\n';
  }
}

PointCloud normalize_unit_cube(const PointCloud& cloud) {
  const std::size_t d = cloud.dim();
  const std::size_t n = cloud.size();
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = cloud.point(i);
    for (std::size_t k = 0; k < d; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  }
  double extent = 0.0;
  for (std::size_t k = 0; k < d; ++k) extent = std::max(extent, hi[k] - lo[k]);

  std::vector<double> out(cloud.coords().size(), 0.0);
  if (extent > 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k)
        out[i * d + k] = (cloud.coords()[i * d + k] - lo[k]) / extent;
  }
  return PointCloud(cloud.id(), d, std::move(out), cloud.class_label(), cloud.part_labels());
}

PointCloud subsample(const PointCloud& cloud, std::size_t k, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (k < 1 || k > n)
    fail(ErrorKind::Argument, "subsample size " + std::to_string(k) + " outside [1, " +
                                  std::to_string(n) + "]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());

  const std::size_t d = cloud.dim();
  std::vector<double> coords;
  coords.reserve(k * d);
  std::optional<std::vector<int>> parts;
  if (cloud.part_labels()) parts.emplace();
  for (auto i : idx) {
    const auto p = cloud.point(i);
    coords.insert(coords.end(), p.begin(), p.end());
    if (parts) parts->push_back((*cloud.part_labels())[i]);
  }
  return PointCloud(cloud.id(), d, std::move(coords), cloud.class_label(), std::move(parts));
}

}  // namespace ctssl

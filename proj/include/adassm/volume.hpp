#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace adassm {

/// Grid extent in voxels. `x` is the fastest-varying axis in memory.
struct Dims {
  int x = 0;
  int y = 0;
  int z = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
  }
  bool operator==(const Dims&) const = default;
};

std::string to_string(const Dims& d);

using Vec3 = Eigen::Vector3d;

/// Scalar volume on a regular grid. World coordinates are centred on the grid:
/// voxel (i, j, k) sits at ((i - (Dx-1)/2) * spacing, ...).
struct Volume {
  Dims dims;
  double spacing = 1.0;
  std::vector<float> data;

  Volume() = default;
  Volume(Dims d, double s, float fill = 0.0f) : dims(d), spacing(s), data(d.count(), fill) {}

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims.y + j) * dims.x + i;
  }
  float& at(int i, int j, int k) { return data[index(i, j, k)]; }
  float at(int i, int j, int k) const { return data[index(i, j, k)]; }

  Vec3 world(int i, int j, int k) const;
  /// Continuous voxel index of a world position (inverse of world()).
  Vec3 voxel(const Vec3& p) const;

  bool operator==(const Volume&) const = default;
};

/// Ordered M x 3 correspondence points (world coordinates).
struct CorrespondenceSet {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
  Matrix points;

  CorrespondenceSet() = default;
  explicit CorrespondenceSet(Matrix p) : points(std::move(p)) {}
  explicit CorrespondenceSet(int m) : points(Matrix::Zero(m, 3)) {}

  int size() const { return static_cast<int>(points.rows()); }
  /// (x0, y0, z0, x1, ...) view of length 3M.
  Eigen::VectorXd flattened() const;
  static CorrespondenceSet from_flat(const Eigen::VectorXd& flat);

  bool operator==(const CorrespondenceSet& o) const {
    return points.rows() == o.points.rows() && points == o.points;
  }
};

/// Trilinear sample at a continuous voxel index, clamping to the border.
float sample_trilinear(const Volume& vol, const Vec3& voxel_index);

// Raw little-endian float32, x-fastest.
void write_f32(const std::filesystem::path& path, const std::vector<float>& values);
std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count);

// One "x y z" line per point, 17 significant digits.
void write_particles(const std::filesystem::path& path, const CorrespondenceSet& c);
CorrespondenceSet read_particles(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace adassm

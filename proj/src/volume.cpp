#include "adassm/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace adassm {

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

void to_little_endian(std::vector<float>& values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : values) f = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(f)));
  }
}

}  // namespace

std::string to_string(const Dims& d) {
  return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z);
}

Vec3 Volume::world(int i, int j, int k) const {
  return {(i - 0.5 * (dims.x - 1)) * spacing, (j - 0.5 * (dims.y - 1)) * spacing,
          (k - 0.5 * (dims.z - 1)) * spacing};
}

Vec3 Volume::voxel(const Vec3& p) const {
  return {p.x() / spacing + 0.5 * (dims.x - 1), p.y() / spacing + 0.5 * (dims.y - 1),
          p.z() / spacing + 0.5 * (dims.z - 1)};
}

Eigen::VectorXd CorrespondenceSet::flattened() const {
  return Eigen::Map<const Eigen::VectorXd>(points.data(), points.size());
}

CorrespondenceSet CorrespondenceSet::from_flat(const Eigen::VectorXd& flat) {
  if (flat.size() % 3 != 0) {
    throw std::invalid_argument("flattened correspondence length " + std::to_string(flat.size()) +
                                " is not a multiple of 3");
  }
  Matrix m = Eigen::Map<const Matrix>(flat.data(), flat.size() / 3, 3);
  return CorrespondenceSet(std::move(m));
}

float sample_trilinear(const Volume& vol, const Vec3& v) {
  const int dx = vol.dims.x, dy = vol.dims.y, dz = vol.dims.z;
  auto axis = [](double c, int n, int& i0, int& i1, double& t) {
    c = std::clamp(c, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<int>(std::floor(c));
    t = c - i0;
    i1 = std::min(i0 + 1, n - 1);
  };
  int x0, x1, y0, y1, z0, z1;
  double tx, ty, tz;
  axis(v.x(), dx, x0, x1, tx);
  axis(v.y(), dy, y0, y1, ty);
  axis(v.z(), dz, z0, z1, tz);

  auto lerp = [](double a, double b, double t) { return a * (1.0 - t) + b * t; };
  const double c00 = lerp(vol.at(x0, y0, z0), vol.at(x1, y0, z0), tx);
  const double c10 = lerp(vol.at(x0, y1, z0), vol.at(x1, y1, z0), tx);
  const double c01 = lerp(vol.at(x0, y0, z1), vol.at(x1, y0, z1), tx);
  const double c11 = lerp(vol.at(x0, y1, z1), vol.at(x1, y1, z1), tx);
  const double c0 = lerp(c00, c10, ty);
  const double c1 = lerp(c01, c11, ty);
  return static_cast<float>(lerp(c0, c1, tz));
}

void write_f32(const std::filesystem::path& path, const std::vector<float>& values) {
  std::vector<float> le = values;
  to_little_endian(le);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(le.data()),
            static_cast<std::streamsize>(le.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected_count * sizeof(float)) {
    throw std::runtime_error(path.string() + ": expected " + std::to_string(expected_count) +
                             " float32 values, file has " + std::to_string(bytes) + " bytes");
  }
  in.seekg(0);
  std::vector<float> values(expected_count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("read failed: " + path.string());
  to_little_endian(values);
  return values;
}

void write_particles(const std::filesystem::path& path, const CorrespondenceSet& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (int i = 0; i < c.size(); ++i) {
    os << c.points(i, 0) << ' ' << c.points(i, 1) << ' ' << c.points(i, 2) << '\n';
  }
  write_text(path, os.str());
}

CorrespondenceSet read_particles(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<double> vals;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected three numbers");
    }
    vals.insert(vals.end(), {x, y, z});
  }
  return CorrespondenceSet::from_flat(Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace adassm

#include "adassm/synthetic_cohort.hpp"

#include "adassm/rng.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace adassm {

using nlohmann::json;

std::array<double, kHarmonicCount> real_harmonics(const Vec3& u) {
  const double x = u.x(), y = u.y(), z = u.z();
  const double c1 = 0.48860251190291992;   // sqrt(3/4pi)
  const double c2a = 1.0925484305920792;   // sqrt(15/pi)/2
  const double c20 = 0.31539156525252005;  // sqrt(5/pi)/4
  const double c22 = 0.54627421529603959;  // sqrt(15/pi)/4
  const double c33 = 0.59004358992664352;  // sqrt(35/2pi)/4
  const double c32a = 2.8906114426405538;  // sqrt(105/pi)/2
  const double c31 = 0.45704579946446572;  // sqrt(21/2pi)/4
  const double c30 = 0.37317633259011540;  // sqrt(7/pi)/4
  const double c32b = 1.4453057213202769;  // sqrt(105/pi)/4
  return {
      c1 * y,
      c1 * z,
      c1 * x,
      c2a * x * y,
      c2a * y * z,
      c20 * (3 * z * z - 1),
      c2a * x * z,
      c22 * (x * x - y * y),
      c33 * y * (3 * x * x - y * y),
      c32a * x * y * z,
      c31 * y * (5 * z * z - 1),
      c30 * z * (5 * z * z - 3),
      c31 * x * (5 * z * z - 1),
      c32b * z * (x * x - y * y),
      c33 * x * (x * x - 3 * y * y),
  };
}

std::string to_string(GroupLabel g) { return g == GroupLabel::control ? "control" : "pathology"; }

GroupLabel group_from_string(const std::string& s) {
  if (s == "control") return GroupLabel::control;
  if (s == "pathology") return GroupLabel::pathology;
  throw std::invalid_argument("unknown group label '" + s + "'");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

double ellipsoid_radius(const Vec3& radii, const Vec3& u) {
  const double a = u.x() / radii.x(), b = u.y() / radii.y(), c = u.z() / radii.z();
  return 1.0 / std::sqrt(a * a + b * b + c * c);
}

double bump_factor(const ShapeParams& p, const Vec3& u) {
  const auto y = real_harmonics(u);
  double s = 1.0;
  for (int k = 0; k < kHarmonicCount; ++k) s += p.bump_coeffs[k] * y[k];
  return s;
}

std::string harmonic_name(int k) {
  int l = 1;
  while (harmonic_index(l + 1, -(l + 1)) <= k) ++l;
  const int m = k - harmonic_index(l, -l) - l;
  return "bump_coeffs[" + std::to_string(k) + "] (l=" + std::to_string(l) + ", m=" +
         std::to_string(m) + ")";
}

// Dense check directions for positivity and bounding-box tests.
const std::vector<Angles>& dense_angles() {
  static const std::vector<Angles> angles = [] {
    std::vector<Angles> a;
    const int nt = 64, np = 128;
    for (int i = 0; i <= nt; ++i) {
      for (int j = 0; j < np; ++j) {
        a.push_back({std::numbers::pi * i / nt, 2.0 * std::numbers::pi * j / np});
      }
    }
    return a;
  }();
  return angles;
}

void check_fits(const ShapeParams& p, Dims dims, double spacing) {
  Volume probe(Dims{dims.x, dims.y, dims.z}, spacing);
  probe.data.clear();
  const auto pts = surface_points(p, dense_angles());
  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (int i = 0; i < pts.size(); ++i) {
    const Vec3 v = probe.voxel(pts.points.row(i).transpose());
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 limit(dims.x - 3, dims.y - 3, dims.z - 3);
  if ((lo.array() < 2.0).any() || (hi.array() > limit.array()).any()) {
    std::ostringstream os;
    os << "shape exceeds grid " << to_string(dims) << " with 2-voxel margin: bounding box (voxels) ["
       << lo.transpose() << "] .. [" << hi.transpose() << "], allowed [2 2 2] .. ["
       << limit.transpose() << "]";
    throw ShapeRejected(os.str());
  }
}

}  // namespace

void to_json(json& j, const ShapeParams& p) {
  j = json{{"radii", vec3_json(p.radii)},
           {"bump_coeffs", p.bump_coeffs},
           {"group", to_string(p.group)},
           {"rotation", vec3_json(p.rotation)},
           {"translation", vec3_json(p.translation)}};
}

void from_json(const json& j, ShapeParams& p) {
  p.radii = vec3_from(j.at("radii"));
  p.bump_coeffs = j.at("bump_coeffs").get<std::vector<double>>();
  p.group = group_from_string(j.at("group").get<std::string>());
  p.rotation = vec3_from(j.at("rotation"));
  p.translation = vec3_from(j.at("translation"));
}

Eigen::Matrix3d pose_rotation(const ShapeParams& p) {
  using Eigen::AngleAxisd;
  return (AngleAxisd(p.rotation.z(), Vec3::UnitZ()) * AngleAxisd(p.rotation.y(), Vec3::UnitY()) *
          AngleAxisd(p.rotation.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

double radius_function(const ShapeParams& p, const Vec3& u) {
  return ellipsoid_radius(p.radii, u) * bump_factor(p, u);
}

void validate_params(const ShapeParams& p) {
  for (int a = 0; a < 3; ++a) {
    if (!(p.radii[a] > 0.0) || !std::isfinite(p.radii[a])) {
      throw ShapeRejected("radii[" + std::to_string(a) + "] = " + std::to_string(p.radii[a]) +
                          " must be positive");
    }
  }
  if (p.bump_coeffs.size() != kHarmonicCount) {
    throw ShapeRejected("expected " + std::to_string(kHarmonicCount) + " bump coefficients, got " +
                        std::to_string(p.bump_coeffs.size()));
  }
  double sum_abs = 0.0;
  for (int k = 0; k < kHarmonicCount; ++k) {
    if (!std::isfinite(p.bump_coeffs[k])) throw ShapeRejected(harmonic_name(k) + " is not finite");
    sum_abs += std::abs(p.bump_coeffs[k]);
  }
  // |Y_lm| < 1 for l <= 3, so a coefficient l1-norm below 1 cannot reach zero.
  if (sum_abs < 1.0) return;

  double worst = 1e300;
  Vec3 worst_u = Vec3::UnitZ();
  for (const auto& a : dense_angles()) {
    const Vec3 u = direction(a);
    const double f = bump_factor(p, u);
    if (f < worst) {
      worst = f;
      worst_u = u;
    }
  }
  for (const auto& a : anchor_angles(256)) {
    const Vec3 u = direction(a);
    const double f = bump_factor(p, u);
    if (f < worst) {
      worst = f;
      worst_u = u;
    }
  }
  if (worst > 0.0) return;

  const auto y = real_harmonics(worst_u);
  int culprit = 0;
  for (int k = 1; k < kHarmonicCount; ++k) {
    if (p.bump_coeffs[k] * y[k] < p.bump_coeffs[culprit] * y[culprit]) culprit = k;
  }
  std::ostringstream os;
  os << "radius function non-positive (factor " << worst << ") at direction ["
     << worst_u.transpose() << "]; offending coefficient " << harmonic_name(culprit) << " = "
     << p.bump_coeffs[culprit];
  throw ShapeRejected(os.str());
}

Vec3 direction(const Angles& a) {
  return {std::sin(a.theta) * std::cos(a.phi), std::sin(a.theta) * std::sin(a.phi),
          std::cos(a.theta)};
}

std::vector<Angles> anchor_angles(int m) {
  if (m < 1) throw std::invalid_argument("anchor count must be positive");
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Angles> out(m);
  for (int i = 0; i < m; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / m;
    out[i] = {std::acos(z), std::fmod(golden * i, 2.0 * std::numbers::pi)};
  }
  return out;
}

CorrespondenceSet surface_points(const ShapeParams& p, const std::vector<Angles>& angles) {
  validate_params(p);
  const Eigen::Matrix3d rot = pose_rotation(p);
  CorrespondenceSet out(static_cast<int>(angles.size()));
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const Vec3 u = direction(angles[i]);
    const Vec3 local = radius_function(p, u) * u;
    out.points.row(static_cast<Eigen::Index>(i)) = (rot * local + p.translation).transpose();
  }
  return out;
}

CorrespondenceSet generate_shape(const ShapeParams& p, int m) {
  return surface_points(p, anchor_angles(m));
}

bool inside_shape(const ShapeParams& p, const Vec3& world) {
  const Vec3 q = pose_rotation(p).transpose() * (world - p.translation);
  const double n = q.norm();
  if (n == 0.0) return true;
  return n <= radius_function(p, q / n);
}

Volume voxelize(const ShapeParams& p, Dims dims, double spacing) {
  validate_params(p);
  if (dims.x < 5 || dims.y < 5 || dims.z < 5) {
    throw std::invalid_argument("grid " + to_string(dims) + " too small");
  }
  check_fits(p, dims, spacing);
  Volume vol(dims, spacing, 0.0f);
  const Eigen::Matrix3d rt = pose_rotation(p).transpose();
  for (int k = 0; k < dims.z; ++k) {
    for (int j = 0; j < dims.y; ++j) {
      for (int i = 0; i < dims.x; ++i) {
        const Vec3 q = rt * (vol.world(i, j, k) - p.translation);
        const double n = q.norm();
        const bool in = n == 0.0 || n <= radius_function(p, q / n);
        vol.at(i, j, k) = in ? 1.0f : 0.0f;
      }
    }
  }
  return vol;
}

void to_json(json& j, const TextureConfig& t) {
  j = json{{"foreground", t.foreground},       {"background", t.background},
           {"contrast_jitter", t.contrast_jitter}, {"gradient_amplitude", t.gradient_amplitude},
           {"blob_count", t.blob_count},       {"blob_intensity", t.blob_intensity},
           {"blob_radius", t.blob_radius},     {"noise_std", t.noise_std}};
}

void from_json(const json& j, TextureConfig& t) {
  TextureConfig d;
  t.foreground = j.value("foreground", d.foreground);
  t.background = j.value("background", d.background);
  t.contrast_jitter = j.value("contrast_jitter", d.contrast_jitter);
  t.gradient_amplitude = j.value("gradient_amplitude", d.gradient_amplitude);
  t.blob_count = j.value("blob_count", d.blob_count);
  t.blob_intensity = j.value("blob_intensity", d.blob_intensity);
  t.blob_radius = j.value("blob_radius", d.blob_radius);
  t.noise_std = j.value("noise_std", d.noise_std);
  if (t.blob_count < 0 || t.blob_radius <= 0.0 || t.noise_std < 0.0 || t.contrast_jitter < 0.0 ||
      t.contrast_jitter >= 1.0) {
    throw std::invalid_argument("invalid texture config: " + j.dump());
  }
}

std::vector<std::array<int, 3>> blob_centers(const Volume& occupancy, const TextureConfig& cfg,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0xb10bULL));
  const Dims d = occupancy.dims;
  std::uniform_int_distribution<int> ux(0, d.x - 1), uy(0, d.y - 1), uz(0, d.z - 1);
  std::vector<std::array<int, 3>> centers;
  for (int b = 0; b < cfg.blob_count; ++b) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const std::array<int, 3> c{ux(rng), uy(rng), uz(rng)};
      if (occupancy.at(c[0], c[1], c[2]) == 0.0f) {
        centers.push_back(c);
        break;
      }
    }
  }
  return centers;
}

Volume apply_texture(const Volume& occupancy, const TextureConfig& cfg, std::uint64_t seed) {
  for (float v : occupancy.data) {
    if (v != 0.0f && v != 1.0f) throw std::invalid_argument("apply_texture expects binary occupancy");
  }
  std::mt19937_64 rng(mix_seed(seed, 0x7e47ULL));
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double fg = cfg.foreground * (1.0 + cfg.contrast_jitter * sym(rng));
  const double bg = cfg.background * (1.0 + cfg.contrast_jitter * sym(rng));
  Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
  dir /= std::max(dir.norm(), 1e-12);
  const Dims d = occupancy.dims;
  const double half_extent = 0.5 * std::max({d.x, d.y, d.z}) * occupancy.spacing;

  Volume out(d, occupancy.spacing);
  for (int k = 0; k < d.z; ++k) {
    for (int j = 0; j < d.y; ++j) {
      for (int i = 0; i < d.x; ++i) {
        double v = occupancy.at(i, j, k) != 0.0f ? fg : bg;
        if (cfg.gradient_amplitude != 0.0) {
          v += cfg.gradient_amplitude * occupancy.world(i, j, k).dot(dir) / half_extent;
        }
        out.at(i, j, k) = static_cast<float>(v);
      }
    }
  }

  const int reach = static_cast<int>(std::ceil(3.0 * cfg.blob_radius));
  const double inv2r2 = 1.0 / (2.0 * cfg.blob_radius * cfg.blob_radius);
  for (const auto& c : blob_centers(occupancy, cfg, seed)) {
    for (int k = std::max(0, c[2] - reach); k <= std::min(d.z - 1, c[2] + reach); ++k) {
      for (int j = std::max(0, c[1] - reach); j <= std::min(d.y - 1, c[1] + reach); ++j) {
        for (int i = std::max(0, c[0] - reach); i <= std::min(d.x - 1, c[0] + reach); ++i) {
          if (occupancy.at(i, j, k) != 0.0f) continue;
          const double r2 = double(i - c[0]) * (i - c[0]) + double(j - c[1]) * (j - c[1]) +
                            double(k - c[2]) * (k - c[2]);
          out.at(i, j, k) += static_cast<float>(cfg.blob_intensity * std::exp(-r2 * inv2r2));
        }
      }
    }
  }

  if (cfg.noise_std > 0.0) {
    for (auto& v : out.data) v += static_cast<float>(cfg.noise_std * gauss(rng));
  }
  return out;
}

void to_json(json& j, const ShapeDistribution& s) {
  j = json{{"base_radii", vec3_json(s.base_radii)},
           {"radius_jitter", s.radius_jitter},
           {"bump_std", s.bump_std},
           {"pathology_index", s.pathology_index},
           {"pathology_threshold", s.pathology_threshold},
           {"pathology_fraction", s.pathology_fraction},
           {"pathology_amplitude", s.pathology_amplitude},
           {"rotation_jitter", s.rotation_jitter},
           {"translation_jitter", s.translation_jitter}};
}

void from_json(const json& j, ShapeDistribution& s) {
  ShapeDistribution d;
  s.base_radii = j.contains("base_radii") ? vec3_from(j.at("base_radii")) : d.base_radii;
  s.radius_jitter = j.value("radius_jitter", d.radius_jitter);
  s.bump_std = j.value("bump_std", d.bump_std);
  s.pathology_index = j.value("pathology_index", d.pathology_index);
  s.pathology_threshold = j.value("pathology_threshold", d.pathology_threshold);
  s.pathology_fraction = j.value("pathology_fraction", d.pathology_fraction);
  s.pathology_amplitude = j.value("pathology_amplitude", d.pathology_amplitude);
  s.rotation_jitter = j.value("rotation_jitter", d.rotation_jitter);
  s.translation_jitter = j.value("translation_jitter", d.translation_jitter);
  if (s.pathology_index < 0 || s.pathology_index >= kHarmonicCount) {
    throw std::invalid_argument("pathology_index out of range");
  }
}

void CohortSpec::validate() const {
  if (n_samples < 8) throw std::invalid_argument("n_samples must be >= 8");
  if (num_points < 16) throw std::invalid_argument("M (num_points) must be >= 16");
  if (dims.x < 5 || dims.y < 5 || dims.z < 5) throw std::invalid_argument("grid too small");
  if (!(spacing > 0.0)) throw std::invalid_argument("spacing must be positive");
  double sum = 0.0;
  for (double f : splits) {
    if (f < 0.0) throw std::invalid_argument("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
}

void to_json(json& j, const CohortSpec& s) {
  j = json{{"n_samples", s.n_samples},
           {"dims", {s.dims.x, s.dims.y, s.dims.z}},
           {"spacing", s.spacing},
           {"num_points", s.num_points},
           {"texture", s.texture},
           {"shapes", s.shapes},
           {"splits", s.splits},
           {"seed", s.seed}};
}

void from_json(const json& j, CohortSpec& s) {
  CohortSpec d;
  s.n_samples = j.value("n_samples", d.n_samples);
  if (j.contains("dims")) {
    const auto& a = j.at("dims");
    s.dims = {a.at(0).get<int>(), a.at(1).get<int>(), a.at(2).get<int>()};
  }
  s.spacing = j.value("spacing", d.spacing);
  s.num_points = j.value("num_points", d.num_points);
  s.texture = j.contains("texture") ? j.at("texture").get<TextureConfig>() : d.texture;
  s.shapes = j.contains("shapes") ? j.at("shapes").get<ShapeDistribution>() : d.shapes;
  s.splits = j.contains("splits") ? j.at("splits").get<std::array<double, 3>>() : d.splits;
  s.seed = j.value("seed", d.seed);
  s.validate();
}

GroupLabel label_for(const ShapeParams& p, const ShapeDistribution& dist) {
  return p.bump_coeffs.at(dist.pathology_index) > dist.pathology_threshold ? GroupLabel::pathology
                                                                           : GroupLabel::control;
}

ShapeParams sample_params(const CohortSpec& spec, int index) {
  std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& sd = spec.shapes;

  std::string last_error;
  for (int attempt = 0; attempt < 200; ++attempt) {
    ShapeParams p;
    for (int a = 0; a < 3; ++a) p.radii[a] = sd.base_radii[a] * (1.0 + sd.radius_jitter * sym(rng));
    for (int k = 0; k < kHarmonicCount; ++k) p.bump_coeffs[k] = sd.bump_std * gauss(rng);
    const bool pathology = unit(rng) < sd.pathology_fraction;
    if (pathology) {
      p.bump_coeffs[sd.pathology_index] = sd.pathology_amplitude * (1.0 + 0.2 * sym(rng));
    }
    for (int a = 0; a < 3; ++a) p.rotation[a] = sd.rotation_jitter * sym(rng);
    for (int a = 0; a < 3; ++a) p.translation[a] = sd.translation_jitter * sym(rng);
    p.group = label_for(p, sd);
    try {
      validate_params(p);
      check_fits(p, spec.dims, spec.spacing);
      return p;
    } catch (const ShapeRejected& e) {
      last_error = e.what();
    }
  }
  throw std::runtime_error("sample " + std::to_string(index) +
                           ": no valid shape after 200 draws; last rejection: " + last_error);
}

GroundTruthSample generate_sample(const CohortSpec& spec, int index) {
  GroundTruthSample s;
  std::ostringstream id;
  id.width(3);
  id.fill('0');
  id << index;
  s.id = id.str();
  s.params = sample_params(spec, index);
  const Volume occupancy = voxelize(s.params, spec.dims, spec.spacing);
  s.volume = apply_texture(occupancy, spec.texture, mix_seed(spec.seed, 0x10000ULL + index));
  s.correspondences = generate_shape(s.params, spec.num_points);
  return s;
}

std::vector<Split> assign_splits(const CohortSpec& spec) {
  const int n = spec.n_samples;
  const int n_train = static_cast<int>(std::lround(spec.splits[0] * n));
  const int n_val = std::min(n - n_train, static_cast<int>(std::lround(spec.splits[1] * n)));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(spec.seed, 0x5b117ULL));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Split> out(n, Split::test);
  for (int r = 0; r < n; ++r) {
    out[order[r]] = r < n_train ? Split::train : (r < n_train + n_val ? Split::val : Split::test);
  }
  return out;
}

std::vector<const GroundTruthSample*> Cohort::split(Split s) const {
  std::vector<const GroundTruthSample*> out;
  for (const auto& g : samples) {
    if (g.split == s) out.push_back(&g);
  }
  return out;
}

Cohort generate_cohort(const CohortSpec& spec) {
  spec.validate();
  Cohort c;
  c.spec = spec;
  const auto splits = assign_splits(spec);
  c.samples.reserve(spec.n_samples);
  for (int i = 0; i < spec.n_samples; ++i) {
    c.samples.push_back(generate_sample(spec, i));
    c.samples.back().split = splits[i];
  }
  return c;
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create cohort directory " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["spec"] = cohort.spec;
  manifest["dims"] = {cohort.spec.dims.x, cohort.spec.dims.y, cohort.spec.dims.z};
  manifest["spacing"] = cohort.spec.spacing;
  manifest["M"] = cohort.spec.num_points;
  json records = json::array();
  for (const auto& s : cohort.samples) {
    if (!(s.volume.dims == cohort.spec.dims)) {
      throw std::invalid_argument("sample " + s.id + " volume dims do not match cohort dims");
    }
    write_f32(dir / ("vol_" + s.id + ".f32"), s.volume.data);
    write_particles(dir / ("corr_" + s.id + ".particles"), s.correspondences);
    json rec{{"id", s.id},
             {"group", to_string(s.params.group)},
             {"split", to_string(s.split)},
             {"augmented", s.augmented},
             {"params", s.params}};
    if (!s.source_id.empty()) rec["source"] = s.source_id;
    records.push_back(std::move(rec));
  }
  manifest["samples"] = records;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Cohort load_cohort(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
  Cohort c;
  c.spec = manifest.at("spec").get<CohortSpec>();
  const auto& d = manifest.at("dims");
  c.spec.dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
  c.spec.spacing = manifest.at("spacing").get<double>();
  c.spec.num_points = manifest.at("M").get<int>();
  for (const auto& r : manifest.at("samples")) {
    GroundTruthSample s;
    s.id = r.at("id").get<std::string>();
    s.split = split_from_string(r.at("split").get<std::string>());
    s.augmented = r.value("augmented", false);
    s.source_id = r.value("source", std::string{});
    s.params = r.at("params").get<ShapeParams>();
    s.volume = Volume(c.spec.dims, c.spec.spacing);
    s.volume.data = read_f32(dir / ("vol_" + s.id + ".f32"), c.spec.dims.count());
    s.correspondences = read_particles(dir / ("corr_" + s.id + ".particles"));
    if (s.correspondences.size() != c.spec.num_points) {
      throw std::runtime_error(dir.string() + ": sample " + s.id + " has " +
                               std::to_string(s.correspondences.size()) + " points, manifest says " +
                               std::to_string(c.spec.num_points));
    }
    c.samples.push_back(std::move(s));
  }
  return c;
}

}  // namespace adassm

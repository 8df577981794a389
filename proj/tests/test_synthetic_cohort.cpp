#include "adassm/synthetic_cohort.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

using namespace adassm;

namespace {

ShapeParams sphere(double r = 1.0) {
  ShapeParams p;
  p.radii = Vec3(r, r, r);
  return p;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("adassm_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("unit sphere points are at distance one") {
  const auto c = generate_shape(sphere(), 128);
  REQUIRE(c.size() == 128);
  for (int i = 0; i < c.size(); ++i) CHECK(c.points.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("doubling the radii doubles every coordinate") {
  ShapeParams p;
  p.radii = Vec3(3.0, 2.0, 1.5);
  auto q = p;
  q.radii *= 2.0;
  const auto a = generate_shape(p, 64), b = generate_shape(q, 64);
  for (int i = 0; i < a.size(); ++i) {
    for (int k = 0; k < 3; ++k) CHECK(b.points(i, k) == 2.0 * a.points(i, k));
  }
}

TEST_CASE("single (2,0) bump follows the analytic radius at each anchor") {
  ShapeParams p;
  p.radii = Vec3(3.0, 2.0, 1.5);
  p.bump_coeffs[harmonic_index(2, 0)] = 0.3;
  const auto angles = anchor_angles(128);
  const auto c = generate_shape(p, 128);
  for (int i = 0; i < c.size(); ++i) {
    const auto& a = angles[static_cast<std::size_t>(i)];
    const double ux = std::sin(a.theta) * std::cos(a.phi);
    const double uy = std::sin(a.theta) * std::sin(a.phi);
    const double uz = std::cos(a.theta);
    const double expected =
        oracle::ellipsoid_radius(3.0, 2.0, 1.5, ux, uy, uz) * (1.0 + 0.3 * oracle::y20_from_polar(a.theta));
    CHECK(c.points.row(i).norm() == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("anchor angles are deterministic and shared") {
  const auto a = anchor_angles(50), b = anchor_angles(50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].theta == b[i].theta);
    CHECK(a[i].phi == b[i].phi);
  }
}

TEST_CASE("non-positive radius is rejected") {
  auto p = sphere();
  p.radii.y() = 0.0;
  CHECK_THROWS_AS(generate_shape(p, 32), ShapeRejected);
  CHECK_THROWS_AS(voxelize(p, {48, 48, 48}, 0.1), ShapeRejected);
}

TEST_CASE("bump driving the radius negative names the coefficient") {
  auto p = sphere();
  p.bump_coeffs[harmonic_index(1, 0)] = 5.0;
  try {
    validate_params(p);
    FAIL("expected rejection");
  } catch (const ShapeRejected& e) {
    CHECK(std::string(e.what()).find("bump_coeffs[1]") != std::string::npos);
  }
}

TEST_CASE("shape outside the grid margin is rejected") {
  CHECK_THROWS_AS(voxelize(sphere(30.0), {48, 48, 48}, 1.0), ShapeRejected);
}

TEST_CASE("unit ball occupancy matches 4/3 pi and a Monte-Carlo integral") {
  const Dims dims{48, 48, 48};
  const double spacing = 2.5 / 48.0;
  const auto vol = voxelize(sphere(), dims, spacing);
  double count = 0.0;
  for (float v : vol.data) count += v;
  const double voxel_volume = spacing * spacing * spacing;
  const double ball = 4.0 / 3.0 * std::numbers::pi;
  CHECK(count * voxel_volume == doctest::Approx(ball).epsilon(0.02));

  std::mt19937_64 rng(7);
  const double half = 0.5 * 48 * spacing;
  std::uniform_real_distribution<double> u(-half, half);
  const int n = 1000000;
  int inside = 0;
  const auto p = sphere();
  for (int i = 0; i < n; ++i) inside += inside_shape(p, Vec3(u(rng), u(rng), u(rng)));
  const double mc = double(inside) / n * std::pow(2 * half, 3);
  CHECK(mc == doctest::Approx(ball).epsilon(0.02));
  CHECK(count * voxel_volume == doctest::Approx(mc).epsilon(0.02));
}

TEST_CASE("voxelize is deterministic") {
  ShapeParams p;
  p.radii = Vec3(11, 9, 8);
  p.bump_coeffs[3] = 0.05;
  p.rotation = Vec3(0.05, -0.02, 0.03);
  CHECK(voxelize(p, {48, 48, 48}, 1.0) == voxelize(p, {48, 48, 48}, 1.0));
}

TEST_CASE("degenerate texture is two-valued") {
  TextureConfig t;
  t.gradient_amplitude = 0.0;
  t.blob_count = 0;
  t.noise_std = 0.0;
  ShapeParams p;
  p.radii = Vec3(11, 9, 8);
  const auto occ = voxelize(p, {48, 48, 48}, 1.0);
  const auto tex = apply_texture(occ, t, 3);
  std::set<float> values(tex.data.begin(), tex.data.end());
  CHECK(values.size() == 2);
}

TEST_CASE("texture is seeded and leaves the mask intact") {
  TextureConfig t;
  t.gradient_amplitude = 0.0;
  t.noise_std = 0.0;
  t.blob_count = 6;
  ShapeParams p;
  p.radii = Vec3(11, 9, 8);
  const auto occ = voxelize(p, {48, 48, 48}, 1.0);
  CHECK(apply_texture(occ, t, 11) == apply_texture(occ, t, 11));

  const auto tex = apply_texture(occ, t, 11);
  std::set<float> inside;
  for (std::size_t i = 0; i < occ.data.size(); ++i) {
    if (occ.data[i] != 0.0f) inside.insert(tex.data[i]);
  }
  CHECK(inside.size() == 1);  // blobs never reach foreground voxels

  const auto centers = blob_centers(occ, t, 11);
  CHECK(centers.size() == 6);
  for (const auto& c : centers) CHECK(occ.at(c[0], c[1], c[2]) == 0.0f);
}

TEST_CASE("blob centres avoid the mask over many seeds") {
  TextureConfig t;
  ShapeParams p;
  p.radii = Vec3(12, 10, 9);
  const auto occ = voxelize(p, {48, 48, 48}, 1.0);
  for (std::uint64_t s = 0; s < 50; ++s) {
    for (const auto& c : blob_centers(occ, t, s)) CHECK(occ.at(c[0], c[1], c[2]) == 0.0f);
  }
}

TEST_CASE("split counts follow the fractions") {
  CohortSpec spec;
  spec.n_samples = 10;
  const auto splits = assign_splits(spec);
  int n[3] = {0, 0, 0};
  for (auto s : splits) ++n[static_cast<int>(s)];
  CHECK(n[0] == 6);
  CHECK(n[1] == 2);
  CHECK(n[2] == 2);
}

TEST_CASE("invalid specs are rejected") {
  CohortSpec spec;
  spec.n_samples = 7;
  CHECK_THROWS(spec.validate());
  spec = CohortSpec{};
  spec.num_points = 8;
  CHECK_THROWS(spec.validate());
  spec = CohortSpec{};
  spec.splits = {0.5, 0.2, 0.2};
  CHECK_THROWS(spec.validate());
}

TEST_CASE("cohort invariants and persistence") {
  CohortSpec spec;
  spec.n_samples = 12;
  spec.num_points = 64;
  const auto cohort = generate_cohort(spec);
  REQUIRE(cohort.samples.size() == 12);

  SUBCASE("labels recompute from stored params") {
    int patho = 0, expected = 0;
    for (const auto& s : cohort.samples) {
      patho += s.params.group == GroupLabel::pathology;
      expected += s.params.bump_coeffs[static_cast<std::size_t>(spec.shapes.pathology_index)] >
                  spec.shapes.pathology_threshold;
    }
    CHECK(patho == expected);
  }

  SUBCASE("points lie on the generating surface") {
    const auto angles = anchor_angles(64);
    for (const auto& s : cohort.samples) {
      const Eigen::Matrix3d r = pose_rotation(s.params);
      for (int i = 0; i < 64; ++i) {
        const Vec3 q = r.transpose() * (s.correspondences.points.row(i).transpose() - s.params.translation);
        const Vec3 u = direction(angles[static_cast<std::size_t>(i)]);
        CHECK(std::abs(q.norm() - radius_function(s.params, u)) < 1e-6);
        CHECK((q.normalized() - u).norm() < 1e-9);
      }
    }
  }

  SUBCASE("splits are disjoint and cover the cohort") {
    std::set<std::string> ids;
    std::size_t total = 0;
    for (auto sp : {Split::train, Split::val, Split::test}) {
      for (const auto* s : cohort.split(sp)) ids.insert(s->id);
      total += cohort.split(sp).size();
    }
    CHECK(ids.size() == 12);
    CHECK(total == 12);
  }

  SUBCASE("cohort is a pure function of the spec") {
    const auto again = generate_sample(spec, 5);
    CHECK(again.volume == cohort.samples[5].volume);
    CHECK(again.correspondences == cohort.samples[5].correspondences);
  }

  SUBCASE("save and reload round-trips bit-exactly") {
    const auto dir = scratch("cohort_roundtrip");
    save_cohort(cohort, dir);
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    const auto back = load_cohort(dir);
    CHECK(back.spec == cohort.spec);
    REQUIRE(back.samples.size() == cohort.samples.size());
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
      CHECK(back.samples[i].id == cohort.samples[i].id);
      CHECK(back.samples[i].split == cohort.samples[i].split);
      CHECK(back.samples[i].params == cohort.samples[i].params);
      CHECK(back.samples[i].volume == cohort.samples[i].volume);
      CHECK(back.samples[i].correspondences == cohort.samples[i].correspondences);
    }
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("shape does not depend on texture settings") {
  CohortSpec a;
  a.n_samples = 8;
  auto b = a;
  b.texture.blob_count = 0;
  b.texture.foreground = 10.0;
  const auto sa = generate_sample(a, 2), sb = generate_sample(b, 2);
  CHECK(sa.correspondences == sb.correspondences);
  CHECK(!(sa.volume == sb.volume));
}

TEST_CASE("missing cohort directory reports its path") {
  try {
    load_cohort("/nonexistent/adassm_cohort");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("/nonexistent/adassm_cohort") != std::string::npos);
  }
}

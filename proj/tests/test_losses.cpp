#include "adassm/losses.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <sstream>

using namespace adassm;

namespace {

torch::Tensor to_tensor(const std::vector<oracle::Field>& rows, std::vector<int64_t> row_shape) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  row_shape.insert(row_shape.begin(), static_cast<int64_t>(rows.size()));
  return torch::tensor(flat, torch::kFloat64).view(row_shape);
}

}  // namespace

TEST_CASE("noise norm") {
  CHECK(tv_loss(torch::zeros({1, 1, 2, 2, 2})).item<double>() == 0.0);
  CHECK(tv_loss(torch::ones({1, 1, 2, 2, 2}, torch::kFloat64)).item<double>() ==
        doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
  auto f = torch::randn({3, 1, 4, 4, 4}, torch::kFloat64);
  CHECK(tv_loss(-2.5 * f).item<double>() == doctest::Approx(2.5 * tv_loss(f).item<double>()).epsilon(1e-12));

  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    std::vector<oracle::Field> rows;
    const int b = 1 + t % 4;
    for (int i = 0; i < b; ++i) rows.push_back(oracle::random_field(rng, 27));
    CHECK(std::abs(tv_loss(to_tensor(rows, {1, 3, 3, 3})).item<double>() - oracle::noise_norm(rows)) < 1e-6);
  }
}

TEST_CASE("spatial total variation") {
  CHECK(spatial_tv_loss(torch::full({1, 1, 3, 3, 3}, 4.0)).item<double>() == 0.0);
  auto ramp = torch::arange(4, torch::kFloat64).view({1, 1, 1, 1, 4}).expand({1, 1, 2, 2, 4}).contiguous();
  CHECK(spatial_tv_loss(ramp).item<double>() == doctest::Approx(1.0));
}

TEST_CASE("adversarial losses") {
  auto half = torch::full({4}, 0.5, torch::kFloat64);
  auto zero = torch::zeros({}, torch::kFloat64);
  auto l = gan_losses(half, half, 0.1, zero);
  CHECK(l.discriminator.item<double>() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  auto tv = torch::tensor(3.0, torch::kFloat64);
  auto with = gan_losses(half, half, 0.1, tv), without = gan_losses(half, half, 0.0, tv);
  CHECK(with.generator.item<double>() - without.generator.item<double>() == doctest::Approx(0.3));
  CHECK(without.generator.item<double>() == doctest::Approx(std::log(0.5)));

  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto dr = oracle::random_field(rng, 1 + t % 5, 0.01, 0.99);
    const auto dn = oracle::random_field(rng, 1 + t % 3, 0.01, 0.99);
    const double beta = oracle::random_field(rng, 1, 0.0, 1.0)[0];
    const double tvv = oracle::random_field(rng, 1, 0.0, 10.0)[0];
    const auto o = oracle::gan(dr, dn, beta, tvv);
    auto r = gan_losses(torch::tensor(dr, torch::kFloat64), torch::tensor(dn, torch::kFloat64), beta,
                        torch::tensor(tvv, torch::kFloat64));
    CHECK(std::abs(r.discriminator.item<double>() - o.d) < 1e-6);
    CHECK(std::abs(r.generator.item<double>() - o.g) < 1e-6);
  }
}

TEST_CASE("non-saturating generator loss") {
  auto p = torch::tensor(std::vector<double>{0.2, 0.8});
  auto l = gan_losses(p, p, 0.0, torch::zeros({}), true);
  CHECK(l.generator.item<double>() == doctest::Approx(-(std::log(0.2) + std::log(0.8)) / 2));
}

TEST_CASE("correspondence RMSE") {
  auto a = torch::randn({2, 5, 3}, torch::kFloat64);
  CHECK(rmse_loss(a, a).item<double>() == 0.0);
  auto p = torch::tensor(std::vector<double>{1, 2, 2}, torch::kFloat64).view({1, 3});
  CHECK(rmse_loss(p, torch::zeros({1, 3}, torch::kFloat64)).item<double>() ==
        doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));

  auto b = torch::randn({2, 5, 3}, torch::kFloat64);
  auto perm = torch::randperm(5);
  CHECK(rmse_loss(a.index_select(1, perm), b.index_select(1, perm)).item<double>() ==
        doctest::Approx(rmse_loss(a, b).item<double>()).epsilon(1e-12));
  CHECK_THROWS(rmse_loss(a, b.narrow(1, 0, 4)));

  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const int bsz = 1 + t % 4, m = 1 + t % 7;
    std::vector<oracle::Field> pr, gt;
    for (int i = 0; i < bsz; ++i) {
      pr.push_back(oracle::random_field(rng, 3 * m, -5, 5));
      gt.push_back(oracle::random_field(rng, 3 * m, -5, 5));
    }
    const double got = rmse_loss(to_tensor(pr, {m, 3}), to_tensor(gt, {m, 3})).item<double>();
    CHECK(std::abs(got - oracle::rmse_batch(pr, gt)) < 1e-6);
  }
}

TEST_CASE("contrastive loss") {
  SUBCASE("identical embeddings give log N") {
    for (int n : {2, 3, 8}) {
      auto e = torch::ones({n, 4}, torch::kFloat64);
      CHECK(std::abs(contrastive_loss(e, e).item<double>() - std::log(double(n))) < 1e-6);
    }
  }
  SUBCASE("orthonormal pair") {
    auto e = torch::eye(2, torch::kFloat64);
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK(contrastive_loss(e, e).item<double>() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.3133).epsilon(1e-4));
  }
  SUBCASE("scale invariance") {
    auto c = torch::randn({4, 6}, torch::kFloat64), n = torch::randn({4, 6}, torch::kFloat64);
    CHECK(contrastive_loss(3.7 * c, 3.7 * n).item<double>() ==
          doctest::Approx(contrastive_loss(c, n).item<double>()).epsilon(1e-12));
  }
  SUBCASE("preconditions") {
    CHECK_THROWS(contrastive_loss(torch::ones({1, 3}), torch::ones({1, 3})));
    CHECK_THROWS(contrastive_loss(torch::zeros({2, 3}), torch::ones({2, 3})));
  }
  SUBCASE("brute force") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 100; ++t) {
      const int n = 2 + t % 5, d = 1 + t % 9;
      std::vector<oracle::Field> c, z;
      for (int i = 0; i < n; ++i) {
        c.push_back(oracle::random_field(rng, static_cast<std::size_t>(d)));
        z.push_back(oracle::random_field(rng, static_cast<std::size_t>(d)));
      }
      const double got = contrastive_loss(to_tensor(c, {d}), to_tensor(z, {d})).item<double>();
      CHECK(std::abs(got - oracle::contrastive(c, z)) < 1e-6);
    }
  }
}

TEST_CASE("total loss") {
  LossBreakdown b;
  b.gan_g = 0.7;
  b.rmse_noisy = 1.5;
  b.rmse_clean = 1.25;
  b.bc = 2.0;
  b.pc = 3.0;
  LossWeights w;
  w.alpha = 1.0;
  w.lambda_bc = w.lambda_pc = 0.0;
  CHECK(total_loss(b, w) == doctest::Approx(0.7 + 1.5 + 1.25));
  w.lambda_bc = 0.5;
  w.lambda_pc = 0.1;
  CHECK(std::abs(total_loss(b, w) - (0.7 + 1.5 + 1.25 + 1.0 + 0.3)) < 1e-6);
  w.lambda_pc = -1;
  CHECK_THROWS(w.validate());
}

TEST_CASE("run log formatting") {
  const auto header = runlog_header();
  CHECK(header.rfind("step,epoch,L_TV,L_GAN_D,L_GAN_G,L_RMSE_noisy,L_RMSE_clean", 0) == 0);
  LossBreakdown b;
  b.total = 1.0;
  const auto row = runlog_row(3, 1, b);
  CHECK(row.rfind("3,1,", 0) == 0);
  std::size_t commas = 0;
  for (char c : header) commas += c == ',';
  std::size_t row_commas = 0;
  for (char c : row) row_commas += c == ',';
  CHECK(commas == row_commas);
  b.rmse_clean = std::nan("");
  CHECK_FALSE(b.finite());
}

#include "adassm/shape_space.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace adassm {

using nlohmann::json;

double PCAModel::explained_variance() const {
  if (total_variance <= 0.0) return 1.0;
  return eigenvalues.sum() / total_variance;
}

Eigen::VectorXd PCAModel::project(const CorrespondenceSet& c) const {
  const Eigen::VectorXd x = c.flattened();
  if (x.size() != mean.size()) {
    throw std::invalid_argument("project: correspondence length " + std::to_string(x.size()) +
                                " != model dimension " + std::to_string(mean.size()));
  }
  return components * (x - mean);
}

PCAModel fit_pca(const std::vector<CorrespondenceSet>& train, double variance_threshold,
                 int max_components) {
  if (train.size() < 2) throw std::invalid_argument("fit_pca needs at least 2 training shapes");
  const int m = train.front().size();
  const int n = static_cast<int>(train.size());
  Eigen::MatrixXd data(n, 3 * m);
  for (int i = 0; i < n; ++i) {
    if (train[i].size() != m) {
      throw std::invalid_argument("fit_pca: shape " + std::to_string(i) + " has " +
                                  std::to_string(train[i].size()) + " points, expected " +
                                  std::to_string(m));
    }
    data.row(i) = train[i].flattened().transpose();
  }

  PCAModel model;
  model.mean = data.colwise().mean().transpose();
  data.rowwise() -= model.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const Eigen::VectorXd all_eigen = s.array().square() / static_cast<double>(n - 1);
  model.total_variance = all_eigen.sum();

  const double max_eig = all_eigen.size() ? all_eigen(0) : 0.0;
  int rank = 0;
  while (rank < all_eigen.size() && all_eigen(rank) > 1e-12 * std::max(max_eig, 1e-300)) ++rank;
  rank = std::min(rank, std::min(n - 1, 3 * m));

  int k = rank;
  if (variance_threshold < 1.0) {
    double cum = 0.0;
    for (int i = 0; i < rank; ++i) {
      cum += all_eigen(i);
      if (cum >= variance_threshold * model.total_variance) {
        k = i + 1;
        break;
      }
    }
  }
  if (max_components > 0) k = std::min(k, max_components);

  model.eigenvalues = all_eigen.head(k);
  model.components = svd.matrixV().leftCols(k).transpose();
  // Fix the sign so the largest-magnitude entry of each component is positive.
  for (int i = 0; i < k; ++i) {
    Eigen::Index arg;
    model.components.row(i).cwiseAbs().maxCoeff(&arg);
    if (model.components(i, arg) < 0) model.components.row(i) *= -1.0;
  }
  return model;
}

CorrespondenceSet reconstruct_correspondences(const PCAModel& pca, const Eigen::VectorXd& scores) {
  if (scores.size() != pca.num_components()) {
    throw std::invalid_argument("reconstruct: got " + std::to_string(scores.size()) +
                                " scores, model has " + std::to_string(pca.num_components()) +
                                " components");
  }
  return CorrespondenceSet::from_flat(pca.mean + pca.components.transpose() * scores);
}

void save_pca(const PCAModel& pca, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["mean"] = std::vector<double>(pca.mean.data(), pca.mean.data() + pca.mean.size());
  j["eigenvalues"] =
      std::vector<double>(pca.eigenvalues.data(), pca.eigenvalues.data() + pca.eigenvalues.size());
  j["total_variance"] = pca.total_variance;
  j["num_components"] = pca.num_components();
  j["dimension"] = pca.dimension();
  write_text(dir / "pca.json", j.dump(2) + "\n");

  std::vector<float> blob;
  blob.reserve(static_cast<std::size_t>(pca.components.size()));
  for (int r = 0; r < pca.components.rows(); ++r) {
    for (int c = 0; c < pca.components.cols(); ++c) blob.push_back(static_cast<float>(pca.components(r, c)));
  }
  write_f32(dir / "components.f32", blob);
}

PCAModel load_pca(const std::filesystem::path& dir) {
  const json j = json::parse(read_text(dir / "pca.json"));
  PCAModel pca;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto eig = j.at("eigenvalues").get<std::vector<double>>();
  pca.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  pca.eigenvalues = Eigen::Map<const Eigen::VectorXd>(eig.data(), static_cast<Eigen::Index>(eig.size()));
  pca.total_variance = j.at("total_variance").get<double>();
  const int k = static_cast<int>(eig.size());
  const int d = static_cast<int>(mean.size());
  const auto blob = read_f32(dir / "components.f32", static_cast<std::size_t>(k) * d);
  pca.components.resize(k, d);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < d; ++c) pca.components(r, c) = blob[static_cast<std::size_t>(r) * d + c];
  }
  return pca;
}

double mean_nearest_neighbor_distance(const Eigen::MatrixXd& scores) {
  const auto n = scores.rows();
  if (n < 2) throw std::invalid_argument("nearest-neighbour distance needs at least 2 rows");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) best = std::min(best, (scores.row(i) - scores.row(j)).norm());
    }
    total += best;
  }
  return total / static_cast<double>(n);
}

KDEModel fit_kde(const Eigen::MatrixXd& scores, double bandwidth) {
  if (scores.rows() < 2) throw std::invalid_argument("fit_kde needs at least 2 training scores");
  KDEModel kde;
  kde.training_scores = scores;
  kde.bandwidth = bandwidth >= 0.0 ? bandwidth : mean_nearest_neighbor_distance(scores);
  return kde;
}

Eigen::MatrixXd sample_kde(const KDEModel& kde, int n, std::uint64_t seed) {
  const auto rows = kde.training_scores.rows();
  const auto k = kde.training_scores.cols();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, rows - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd out(n, k);
  for (int i = 0; i < n; ++i) {
    const Eigen::Index src = pick(rng);
    for (Eigen::Index c = 0; c < k; ++c) {
      const double eps = gauss(rng);
      out(i, c) = kde.training_scores(src, c) + (kde.bandwidth > 0.0 ? kde.bandwidth * eps : 0.0);
    }
  }
  return out;
}

ThinPlateSpline::ThinPlateSpline(const CorrespondenceSet& src, const CorrespondenceSet& dst) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("TPS: source has " + std::to_string(src.size()) +
                                " points, target has " + std::to_string(dst.size()));
  }
  const int m = src.size();
  centers_ = src.points;
  affine_.setZero();
  weights_ = Eigen::MatrixX3d::Zero(m, 3);
  if (src.points == dst.points) {
    identity_ = true;
    return;
  }

  double extent = 0.0;
  for (int i = 0; i < m; ++i) extent = std::max(extent, src.points.row(i).cwiseAbs().maxCoeff());
  const double tol = 1e-9 * std::max(extent, 1.0);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if ((src.points.row(i) - src.points.row(j)).norm() <= tol) {
        throw std::runtime_error("TPS system singular: source points " + std::to_string(i) +
                                 " and " + std::to_string(j) + " coincide");
      }
    }
  }

  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(m + 4, m + 4);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) system(i, j) = (src.points.row(i) - src.points.row(j)).norm();
    system(i, m) = 1.0;
    system.block(i, m + 1, 1, 3) = src.points.row(i);
    system(m, i) = 1.0;
    system.block(m + 1, i, 3, 1) = src.points.row(i).transpose();
  }
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m + 4, 3);
  rhs.topRows(m) = dst.points - src.points;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) {
    throw std::runtime_error("TPS system singular: control points are degenerate (rank " +
                             std::to_string(lu.rank()) + " of " + std::to_string(m + 4) + ")");
  }
  const Eigen::MatrixXd sol = lu.solve(rhs);
  weights_ = sol.topRows(m);
  affine_ = sol.bottomRows(4);
}

Vec3 ThinPlateSpline::operator()(const Vec3& p) const {
  if (identity_) return p;
  Eigen::RowVector3d d = affine_.row(0) + p.transpose() * affine_.bottomRows(3);
  for (Eigen::Index i = 0; i < centers_.rows(); ++i) {
    d += (p.transpose() - centers_.row(i)).norm() * weights_.row(i);
  }
  return p + d.transpose();
}

std::vector<Vec3> warp_field(const Dims& dims, double spacing, const CorrespondenceSet& src,
                             const CorrespondenceSet& dst) {
  // Inverse map: output positions (around dst) back to input positions (around src).
  const ThinPlateSpline inverse(dst, src);
  Volume grid(dims, spacing);
  grid.data.clear();
  std::vector<Vec3> field(dims.count());
  for (int k = 0; k < dims.z; ++k) {
    for (int j = 0; j < dims.y; ++j) {
      for (int i = 0; i < dims.x; ++i) {
        const Vec3 p = grid.world(i, j, k);
        field[grid.index(i, j, k)] = (inverse(p) - p) / spacing;
      }
    }
  }
  return field;
}

Volume tps_warp(const Volume& vol, const CorrespondenceSet& src, const CorrespondenceSet& dst,
                const WarpOptions& opts) {
  if (src.size() != dst.size()) throw std::invalid_argument("tps_warp: src/dst sizes differ");
  if (src.points == dst.points) return vol;

  const double extent = std::max({vol.dims.x, vol.dims.y, vol.dims.z}) * vol.spacing;
  const double max_disp = (dst.points - src.points).rowwise().norm().maxCoeff();
  if (max_disp > opts.max_displacement_fraction * extent) {
    std::ostringstream os;
    os << "tps_warp: displacement " << max_disp << " exceeds " << opts.max_displacement_fraction
       << " of grid extent " << extent;
    throw std::invalid_argument(os.str());
  }

  const auto field = warp_field(vol.dims, vol.spacing, src, dst);
  Volume out(vol.dims, vol.spacing);
  for (int k = 0; k < vol.dims.z; ++k) {
    for (int j = 0; j < vol.dims.y; ++j) {
      for (int i = 0; i < vol.dims.x; ++i) {
        const std::size_t idx = vol.index(i, j, k);
        out.data[idx] = sample_trilinear(vol, Vec3(i, j, k) + field[idx]);
      }
    }
  }
  return out;
}

KdeAugmentation kde_augment(const Cohort& cohort, int n_aug, std::uint64_t seed,
                            double variance_threshold) {
  const auto train = cohort.split(Split::train);
  if (train.size() < 2) throw std::invalid_argument("KDE augmentation needs >= 2 training samples");
  std::vector<CorrespondenceSet> corrs;
  for (const auto* s : train) corrs.push_back(s->correspondences);

  KdeAugmentation aug;
  aug.pca = fit_pca(corrs, variance_threshold);
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(train.size()), aug.pca.num_components());
  for (std::size_t i = 0; i < train.size(); ++i) {
    scores.row(static_cast<Eigen::Index>(i)) = aug.pca.project(corrs[i]).transpose();
  }
  aug.kde = fit_kde(scores);
  aug.sampled_scores = sample_kde(aug.kde, n_aug, seed);

  for (int a = 0; a < n_aug; ++a) {
    const Eigen::VectorXd s = aug.sampled_scores.row(a).transpose();
    Eigen::Index nearest;
    (scores.rowwise() - s.transpose()).rowwise().squaredNorm().minCoeff(&nearest);
    const auto* source = train[static_cast<std::size_t>(nearest)];

    GroundTruthSample g;
    std::ostringstream id;
    id << "aug_";
    id.width(4);
    id.fill('0');
    id << a;
    g.id = id.str();
    g.split = Split::train;
    g.augmented = true;
    g.source_id = source->id;
    g.params = source->params;
    g.correspondences = reconstruct_correspondences(aug.pca, s);
    g.volume = tps_warp(source->volume, source->correspondences, g.correspondences);
    aug.source_ids.push_back(source->id);
    aug.samples.push_back(std::move(g));
  }
  return aug;
}

}  // namespace adassm

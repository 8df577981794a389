#include "adassm/evaluation.hpp"

#include "adassm/rng.hpp"
#include "adassm/shape_space.hpp"
#include "adassm/ssm_net.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace adassm {

using nlohmann::json;

namespace {

void check_same_size(const CorrespondenceSet& a, const CorrespondenceSet& b, const char* who) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(who) + ": point counts differ (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  if (a.size() == 0) throw std::invalid_argument(std::string(who) + ": empty correspondence set");
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double harmonic_abs_max(int harmonic) {
  static std::map<int, double> cache;
  auto it = cache.find(harmonic);
  if (it != cache.end()) return it->second;
  double best = 0.0;
  for (const auto& a : anchor_angles(20000)) {
    best = std::max(best, std::abs(real_harmonics(direction(a))[static_cast<std::size_t>(harmonic)]));
  }
  cache[harmonic] = best;
  return best;
}

double fold_accuracy(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                     const Eigen::MatrixXd& test_x, const std::vector<int>& test_y, int classes,
                     const DownstreamOptions& opts, std::uint64_t seed) {
  const Eigen::RowVectorXd mean = train_x.colwise().mean();
  Eigen::RowVectorXd sd = ((train_x.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    if (sd(i) < 1e-12) sd(i) = 1.0;
  }
  auto to_tensor = [&](const Eigen::MatrixXd& m) {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> s =
        ((m.rowwise() - mean).array().rowwise() / sd.array()).cast<float>();
    return torch::from_blob(s.data(), {s.rows(), s.cols()}, torch::kFloat32).clone();
  };
  auto labels = [](const std::vector<int>& y) {
    std::vector<int64_t> v(y.begin(), y.end());
    return torch::tensor(v, torch::kLong);
  };
  const auto xtr = to_tensor(train_x);
  const auto xte = to_tensor(test_x);
  const auto ytr = labels(train_y);
  const auto yte = labels(test_y);

  torch::manual_seed(seed);
  torch::nn::Sequential mlp(torch::nn::Linear(train_x.cols(), opts.hidden), torch::nn::ReLU(),
                            torch::nn::Linear(opts.hidden, classes));
  torch::optim::Adam opt(mlp->parameters(), torch::optim::AdamOptions(opts.lr));
  for (int e = 0; e < opts.epochs; ++e) {
    opt.zero_grad();
    auto loss = torch::nn::functional::cross_entropy(mlp->forward(xtr), ytr);
    loss.backward();
    opt.step();
  }
  torch::NoGradGuard guard;
  const auto pred = mlp->forward(xte).argmax(1);
  return pred.eq(yte).to(torch::kFloat64).mean().item<double>();
}

int class_count(const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("classification needs labels");
  const int lo = *std::min_element(labels.begin(), labels.end());
  const int hi = *std::max_element(labels.begin(), labels.end());
  if (lo < 0) throw std::invalid_argument("labels must be non-negative class indices");
  if (hi < 1) throw std::invalid_argument("classification needs at least 2 classes");
  return hi + 1;
}

DownstreamResult summarize(std::vector<double> acc) {
  DownstreamResult r;
  r.fold_accuracy = std::move(acc);
  const double n = static_cast<double>(r.fold_accuracy.size());
  r.mean = std::accumulate(r.fold_accuracy.begin(), r.fold_accuracy.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : r.fold_accuracy) ss += (a - r.mean) * (a - r.mean);
  r.spread = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  return r;
}

template <typename FoldFeatures>
DownstreamResult cross_validate(const std::vector<int>& labels, const DownstreamOptions& opts,
                                FoldFeatures&& features) {
  const int classes = class_count(labels);
  const auto fold_of = stratified_folds(labels, opts.folds, opts.seed);
  std::vector<double> acc;
  for (int f = 0; f < opts.folds; ++f) {
    std::vector<int> tr, te;
    for (std::size_t i = 0; i < labels.size(); ++i) (fold_of[i] == f ? te : tr).push_back(static_cast<int>(i));
    std::vector<int> per_class(static_cast<std::size_t>(classes), 0);
    for (int i : tr) ++per_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    for (int c = 0; c < classes; ++c) {
      if (per_class[static_cast<std::size_t>(c)] < 2) {
        throw std::invalid_argument("class " + std::to_string(c) + " has fewer than 2 training samples in fold " +
                                    std::to_string(f));
      }
    }
    auto [xtr, xte] = features(tr, te);
    std::vector<int> ytr, yte;
    for (int i : tr) ytr.push_back(labels[static_cast<std::size_t>(i)]);
    for (int i : te) yte.push_back(labels[static_cast<std::size_t>(i)]);
    acc.push_back(fold_accuracy(xtr, ytr, xte, yte, classes, opts, mix_seed(opts.seed, 0x100 + f)));
  }
  return summarize(std::move(acc));
}

}  // namespace

double axis_rmse(const CorrespondenceSet& pred, const CorrespondenceSet& gt) {
  check_same_size(pred, gt, "axis_rmse");
  const double n = pred.size();
  const Eigen::RowVector3d sq = (pred.points - gt.points).array().square().colwise().sum();
  return ((sq / n).array().sqrt()).sum() / 3.0;
}

Eigen::VectorXd per_point_rmse(const CorrespondenceSet& pred, const CorrespondenceSet& gt) {
  check_same_size(pred, gt, "per_point_rmse");
  return ((pred.points - gt.points).rowwise().squaredNorm() / 3.0).array().sqrt();
}

double symmetric_nn_distance(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("symmetric_nn_distance: empty point set");
  auto one_way = [](const Eigen::MatrixX3d& p, const Eigen::MatrixX3d& q) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      sum += std::sqrt((q.rowwise() - p.row(i)).rowwise().squaredNorm().minCoeff());
    }
    return sum / static_cast<double>(p.rows());
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

SurfaceDistance surface_distance(const CorrespondenceSet& pred, const GroundTruthSample& gt,
                                 int n_surface_pts) {
  check_same_size(pred, gt.correspondences, "surface_distance");
  if (n_surface_pts < 1) throw std::invalid_argument("surface_distance: n_surface_pts must be positive");
  const auto surface = surface_points(gt.params, anchor_angles(n_surface_pts));
  const ThinPlateSpline tps(gt.correspondences, pred);
  SurfaceDistance d;
  d.gt_surface = surface.points;
  Eigen::MatrixX3d warped(surface.size(), 3);
  for (int i = 0; i < surface.size(); ++i) {
    const Vec3 p = surface.points.row(i).transpose();
    warped.row(i) = tps(p).transpose();
  }
  d.per_vertex = (warped - d.gt_surface).rowwise().norm();
  d.mean = d.per_vertex.mean();
  d.symmetric_nn = symmetric_nn_distance(d.gt_surface, warped);
  return d;
}

Selection select_best_median_worst(const std::vector<std::pair<std::string, double>>& scores) {
  if (scores.empty()) throw std::invalid_argument("selection needs at least one sample");
  auto s = scores;
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  return {s.front().first, s[(s.size() - 1) / 2].first, s.back().first};
}

GroupDifference group_difference(const std::vector<CorrespondenceSet>& g1,
                                 const std::vector<CorrespondenceSet>& g2) {
  if (g1.empty() || g2.empty()) throw std::invalid_argument("group_difference: empty group");
  const int m = g1.front().size();
  auto mean_of = [m](const std::vector<CorrespondenceSet>& g) {
    Eigen::MatrixX3d acc = Eigen::MatrixX3d::Zero(m, 3);
    for (const auto& c : g) {
      if (c.size() != m) throw std::invalid_argument("group_difference: point counts differ");
      acc += c.points;
    }
    return Eigen::MatrixX3d(acc / static_cast<double>(g.size()));
  };
  const Eigen::MatrixX3d mu1 = mean_of(g1);
  const Eigen::MatrixX3d mu2 = mean_of(g2);
  GroupDifference d;
  d.vectors = mu1 - mu2;
  const double n1 = static_cast<double>(g1.size());
  const double n2 = static_cast<double>(g2.size());
  d.reference = (n1 * mu1 + n2 * mu2) / (n1 + n2);
  const Eigen::VectorXd mag = d.vectors.rowwise().norm();
  Eigen::Index arg = 0;
  const double top = mag.maxCoeff(&arg);
  d.argmax = static_cast<int>(arg);
  d.magnitudes = top > 0 ? Eigen::VectorXd(mag / top) : Eigen::VectorXd::Zero(m);
  return d;
}

bool in_harmonic_support(int harmonic, const Vec3& u, double fraction) {
  if (harmonic < 0 || harmonic >= kHarmonicCount) throw std::invalid_argument("harmonic index out of range");
  const double y = std::abs(real_harmonics(u.normalized())[static_cast<std::size_t>(harmonic)]);
  return y >= fraction * harmonic_abs_max(harmonic);
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("need at least 2 folds");
  if (labels.size() < static_cast<std::size_t>(folds)) {
    throw std::invalid_argument("fewer samples than folds");
  }
  const int classes = class_count(labels);
  std::mt19937_64 rng(mix_seed(seed, 0xf01d));
  std::vector<int> fold(labels.size(), -1);
  int next = 0;
  for (int c = 0; c < classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    if (members.size() < 4) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                                  " samples; at least 4 required");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (auto i : members) fold[i] = next++ % folds;
  }
  return fold;
}

DownstreamResult classify_features(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                   const DownstreamOptions& opts) {
  if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("classify_features: feature rows != labels");
  }
  return cross_validate(labels, opts, [&](const std::vector<int>& tr, const std::vector<int>& te) {
    return std::pair{Eigen::MatrixXd(features(tr, Eigen::all)), Eigen::MatrixXd(features(te, Eigen::all))};
  });
}

DownstreamResult classify_downstream(const std::vector<CorrespondenceSet>& shapes,
                                     const std::vector<int>& labels, const DownstreamOptions& opts) {
  if (shapes.size() != labels.size()) throw std::invalid_argument("classify_downstream: shapes != labels");
  return cross_validate(labels, opts, [&](const std::vector<int>& tr, const std::vector<int>& te) {
    std::vector<CorrespondenceSet> fit;
    for (int i : tr) fit.push_back(shapes[static_cast<std::size_t>(i)]);
    const auto pca = fit_pca(fit, opts.variance_threshold);
    auto project = [&](const std::vector<int>& idx) {
      Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), pca.num_components());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = pca.project(shapes[static_cast<std::size_t>(idx[r])]).transpose();
      }
      return x;
    };
    return std::pair{project(tr), project(te)};
  });
}

std::vector<CorrespondenceSet> predict_all(ImageToSSMNetImpl& model,
                                           const std::vector<const GroundTruthSample*>& samples) {
  torch::NoGradGuard guard;
  const auto dtype = model.parameters().front().scalar_type();
  std::vector<CorrespondenceSet> out;
  constexpr std::size_t kChunk = 8;
  for (std::size_t i = 0; i < samples.size(); i += kChunk) {
    std::vector<const Volume*> vols;
    for (std::size_t k = i; k < std::min(samples.size(), i + kChunk); ++k) vols.push_back(&samples[k]->volume);
    const auto pts = model.forward(volume_tensor(vols).to(dtype)).points;
    for (int64_t b = 0; b < pts.size(0); ++b) out.push_back(to_correspondences(pts[b]));
  }
  return out;
}

EvalReport evaluate_model(ImageToSSMNetImpl& model, const Cohort& cohort, Split split, int n_surface_pts) {
  const auto samples = cohort.split(split);
  if (samples.empty()) throw std::invalid_argument("evaluate_model: split " + to_string(split) + " is empty");
  const auto preds = predict_all(model, samples);
  EvalReport r;
  std::vector<double> rmses, surfaces;
  std::vector<std::pair<std::string, double>> scores;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& gt = *samples[i];
    SampleEvaluation e;
    e.id = gt.id;
    e.group = gt.params.group;
    e.rmse = axis_rmse(preds[i], gt.correspondences);
    e.per_point = per_point_rmse(preds[i], gt.correspondences);
    const auto sd = surface_distance(preds[i], gt, n_surface_pts);
    e.surface = sd.mean;
    e.surface_nn = sd.symmetric_nn;
    e.surface_points = sd.gt_surface;
    e.surface_per_vertex = sd.per_vertex;
    rmses.push_back(e.rmse);
    surfaces.push_back(e.surface);
    scores.emplace_back(e.id, e.surface);
    r.samples.push_back(std::move(e));
  }
  const double n = static_cast<double>(samples.size());
  r.mean_rmse = std::accumulate(rmses.begin(), rmses.end(), 0.0) / n;
  r.median_rmse = median_of(rmses);
  r.mean_surface = std::accumulate(surfaces.begin(), surfaces.end(), 0.0) / n;
  r.median_surface = median_of(surfaces);
  r.selection = select_best_median_worst(scores);
  return r;
}

json to_json(const EvalReport& r) {
  json samples = json::array();
  for (const auto& s : r.samples) {
    samples.push_back({{"id", s.id},
                       {"group", to_string(s.group)},
                       {"rmse", s.rmse},
                       {"surface_distance", s.surface},
                       {"surface_nn_distance", s.surface_nn},
                       {"per_point_rmse", std::vector<double>(s.per_point.data(), s.per_point.data() + s.per_point.size())}});
  }
  json j{{"run", r.run},
         {"n_samples", r.samples.size()},
         {"mean_rmse", r.mean_rmse},
         {"median_rmse", r.median_rmse},
         {"mean_surface_distance", r.mean_surface},
         {"median_surface_distance", r.median_surface},
         {"best", r.selection.best},
         {"median", r.selection.median},
         {"worst", r.selection.worst},
         {"samples", samples}};
  if (r.downstream) {
    j["downstream"] = {{"mean", r.downstream->mean},
                       {"spread", r.downstream->spread},
                       {"folds", r.downstream->fold_accuracy}};
  }
  return j;
}

void write_eval_outputs(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "eval_report.json", to_json(r).dump(2) + "\n");
  for (const auto& s : r.samples) {
    std::ostringstream os;
    os.precision(9);
    os << "x,y,z,distance\n";
    for (Eigen::Index i = 0; i < s.surface_points.rows(); ++i) {
      os << s.surface_points(i, 0) << ',' << s.surface_points(i, 1) << ',' << s.surface_points(i, 2) << ','
         << s.surface_per_vertex(i) << '\n';
    }
    write_text(dir / ("heatmap_" + s.id + ".csv"), os.str());
  }
}

std::string groupdiff_csv(const GroupDifference& g) {
  std::ostringstream os;
  os.precision(9);
  os << "point,ref_x,ref_y,ref_z,dx,dy,dz,magnitude\n";
  for (Eigen::Index i = 0; i < g.vectors.rows(); ++i) {
    os << i << ',' << g.reference(i, 0) << ',' << g.reference(i, 1) << ',' << g.reference(i, 2) << ','
       << g.vectors(i, 0) << ',' << g.vectors(i, 1) << ',' << g.vectors(i, 2) << ',' << g.magnitudes(i) << '\n';
  }
  return os.str();
}

}  // namespace adassm

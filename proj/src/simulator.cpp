#include "hcl/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hcl/error.hpp"
#include "hcl/rng.hpp"

namespace hcl {

namespace {

constexpr double kRowTolerance = 1e-9;

void check_row_stochastic(const Eigen::MatrixXd& m, const std::string& what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorCode::InvalidArgument, what + " must be square and nonempty");
  }
  if (!m.allFinite() || (m.array() < 0.0).any()) {
    throw Error(ErrorCode::InvalidArgument, what + " has negative or non-finite entries");
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (std::abs(m.row(r).sum() - 1.0) > kRowTolerance) {
      throw Error(ErrorCode::InvalidArgument,
                  what + " row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

// Inverse-CDF draw from a probability row.
int draw_from_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, double u) {
  double acc = 0.0;
  const auto k = row.size();
  for (Eigen::Index j = 0; j < k; ++j) {
    acc += row[j];
    if (u < acc) return static_cast<int>(j);
  }
  // Rounding left u just above the accumulated mass: take the last nonzero.
  for (Eigen::Index j = k - 1; j >= 0; --j) {
    if (row[j] > 0.0) return static_cast<int>(j);
  }
  return static_cast<int>(k - 1);
}

std::vector<Sample> draw_split(const Eigen::MatrixXd& means, const GeneratorConfig& cfg,
                               std::size_t n, const char* prefix) {
  auto rng = keyed_engine(cfg.seed, prefix);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<LabelId> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<LabelId>(i % cfg.classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<Sample> out;
  out.reserve(n);
  char id[64];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(id, sizeof id, "%s-%06zu", prefix, i);
    Sample s;
    s.id = id;
    s.ground_truth = labels[i];
    s.features.resize(cfg.dim);
    for (int j = 0; j < cfg.dim; ++j) {
      const double v = means(labels[i], j) + cfg.sigma * gauss(rng);
      s.features[j] = static_cast<double>(static_cast<float>(v));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> default_class_names(int k) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) names.push_back("class-" + std::to_string(i));
  return names;
}

Eigen::MatrixXd sphere_points(int k, int d, double radius, std::mt19937_64& rng,
                              int max_retries, double min_distance) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd pts(k, d);
  for (int i = 0; i < k; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < max_retries && !placed; ++attempt) {
      Eigen::VectorXd v(d);
      for (int j = 0; j < d; ++j) v[j] = gauss(rng);
      const double n = v.norm();
      if (n == 0.0) continue;
      v *= radius / n;
      placed = true;
      for (int p = 0; p < i && placed; ++p) {
        if ((pts.row(p).transpose() - v).norm() < min_distance) placed = false;
      }
      if (placed) pts.row(i) = v.transpose();
    }
    if (!placed) {
      throw Error(ErrorCode::Infeasible,
                  "cannot place " + std::to_string(k) + " class means at separation " +
                      std::to_string(min_distance) + " in dimension " + std::to_string(d));
    }
  }
  return pts;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (classes <= 2) throw Error(ErrorCode::Config, "generator needs more than 2 classes");
  if (dim < 1) throw Error(ErrorCode::Config, "generator dimension must be positive");
  if (n_train == 0) throw Error(ErrorCode::Config, "n_train must be positive");
  if (!(separation > 0.0)) throw Error(ErrorCode::Config, "separation must be positive");
  if (!(sigma > 0.0)) throw Error(ErrorCode::Config, "sigma must be positive");
  if (max_retries < 1) throw Error(ErrorCode::Config, "max_retries must be positive");
}

SimulatedWorld generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  auto mean_rng = keyed_engine(cfg.seed, "means");
  Eigen::MatrixXd means =
      sphere_points(cfg.classes, cfg.dim, cfg.separation, mean_rng, cfg.max_retries, cfg.separation);

  Eigen::MatrixXd proto_rows = means;
  if (cfg.random_prototypes) {
    auto proto_rng = keyed_engine(cfg.seed, "prototypes");
    proto_rows = sphere_points(cfg.classes, cfg.dim, cfg.separation, proto_rng, 1, 0.0);
  }

  ClassSpace classes(default_class_names(cfg.classes));
  Dataset train(classes, draw_split(means, cfg, cfg.n_train, "train"));
  Dataset test(classes, draw_split(means, cfg, cfg.n_test, "test"));
  return SimulatedWorld{std::move(train), std::move(test), PrototypeBank(std::move(proto_rows)),
                        std::move(means)};
}

void AnnotatorModel::validate() const {
  if (id.empty()) throw Error(ErrorCode::InvalidArgument, "annotator id is empty");
  check_row_stochastic(confusion, "confusion of '" + id + "'");
  if (shared) {
    const auto k = confusion.rows();
    if (static_cast<Eigen::Index>(shared->rate.size()) != k) {
      throw Error(ErrorCode::InvalidArgument, "shared channel needs one rate per class");
    }
    for (double r : shared->rate) {
      if (!(r >= 0.0 && r <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "shared error rate outside [0,1]");
      }
    }
    check_row_stochastic(shared->wrong_label, "shared wrong-label table");
    if (shared->wrong_label.rows() != k) {
      throw Error(ErrorCode::InvalidArgument, "shared wrong-label table has wrong size");
    }
    if (shared->wrong_label.diagonal().cwiseAbs().maxCoeff() != 0.0) {
      throw Error(ErrorCode::InvalidArgument, "shared wrong-label table must have zero diagonal");
    }
  }
}

Eigen::MatrixXd AnnotatorModel::marginal_confusion() const {
  if (!shared) return confusion;
  Eigen::MatrixXd m = confusion;
  for (Eigen::Index y = 0; y < m.rows(); ++y) {
    const double r = shared->rate[static_cast<std::size_t>(y)];
    m.row(y) = (1.0 - r) * confusion.row(y) + r * shared->wrong_label.row(y);
  }
  return m;
}

AnnotatorModel AnnotatorModel::identity(std::string id, int k, std::uint64_t seed) {
  return {std::move(id), Eigen::MatrixXd::Identity(k, k), seed, std::nullopt};
}

AnnotatorModel AnnotatorModel::uniform_noise(std::string id, int k, double accuracy,
                                             std::uint64_t seed) {
  std::vector<double> acc(static_cast<std::size_t>(k), accuracy);
  return per_class_accuracy(std::move(id), acc, seed);
}

AnnotatorModel AnnotatorModel::per_class_accuracy(std::string id,
                                                  std::span<const double> accuracy,
                                                  std::uint64_t seed) {
  const auto k = static_cast<Eigen::Index>(accuracy.size());
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "need at least two classes");
  Eigen::MatrixXd c(k, k);
  for (Eigen::Index y = 0; y < k; ++y) {
    const double a = accuracy[static_cast<std::size_t>(y)];
    if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorCode::InvalidArgument, "accuracy outside [0,1]");
    c.row(y).setConstant((1.0 - a) / static_cast<double>(k - 1));
    c(y, y) = a;
  }
  AnnotatorModel m{std::move(id), std::move(c), seed, std::nullopt};
  m.validate();
  return m;
}

std::vector<LabelId> annotate(std::span<const Sample> samples, const AnnotatorModel& annotator) {
  annotator.validate();
  std::vector<LabelId> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.ground_truth) {
      throw Error(ErrorCode::MissingGroundTruth,
                  "simulated annotation needs ground truth for '" + s.id + "'");
    }
    const LabelId y = *s.ground_truth;
    if (y < 0 || y >= annotator.classes()) {
      throw Error(ErrorCode::OutOfRange, "label out of range for annotator '" + annotator.id + "'");
    }
    if (annotator.shared) {
      auto shared_rng = keyed_engine(annotator.shared->seed, s.id);
      if (unit_draw(shared_rng) < annotator.shared->rate[static_cast<std::size_t>(y)]) {
        out.push_back(draw_from_row(annotator.shared->wrong_label.row(y), unit_draw(shared_rng)));
        continue;
      }
    }
    auto rng = keyed_engine(annotator.seed, s.id);
    out.push_back(draw_from_row(annotator.confusion.row(y), unit_draw(rng)));
  }
  return out;
}

AnnotationSet annotate_all(std::span<const Sample> samples,
                           std::span<const AnnotatorModel> annotators) {
  std::vector<std::string> ids;
  for (const auto& a : annotators) ids.push_back(a.id);
  AnnotationSet set(std::move(ids));
  for (std::size_t a = 0; a < annotators.size(); ++a) {
    auto labels = annotate(samples, annotators[a]);
    for (std::size_t i = 0; i < samples.size(); ++i) set.add(a, samples[i].id, labels[i]);
  }
  return set;
}

void CorrectorModel::validate() const {
  if (!(error_rate >= 0.0 && error_rate < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "corrector error rate must lie in [0,1)");
  }
}

LabelId correct(const Sample& sample, const CorrectorModel& corrector, int classes) {
  corrector.validate();
  if (!sample.ground_truth) {
    throw Error(ErrorCode::MissingGroundTruth,
                "oracle correction needs ground truth for '" + sample.id + "'");
  }
  const LabelId y = *sample.ground_truth;
  if (corrector.error_rate == 0.0) return y;
  auto rng = keyed_engine(corrector.seed, sample.id);
  if (unit_draw(rng) >= corrector.error_rate) return y;
  // Uniform over the k-1 wrong labels.
  auto wrong = static_cast<LabelId>(unit_draw(rng) * (classes - 1));
  wrong = std::min(wrong, classes - 2);
  return wrong >= y ? wrong + 1 : wrong;
}

namespace {

struct PairModel {
  int k;
  std::vector<double> ramp;

  std::vector<double> accuracies(double scale) const {
    std::vector<double> a(ramp.size());
    for (std::size_t y = 0; y < a.size(); ++y) a[y] = std::clamp(scale * ramp[y], 0.0, 1.0);
    return a;
  }
  // Mean chance of independent agreement: a^2 + (1-a)^2 / (k-1).
  double chance_agreement(double scale) const {
    double q = 0.0;
    for (double a : accuracies(scale)) q += a * a + (1.0 - a) * (1.0 - a) / (k - 1);
    return q / static_cast<double>(ramp.size());
  }
  double mean_square(double scale) const {
    double m = 0.0;
    for (double a : accuracies(scale)) m += a * a;
    return m / static_cast<double>(ramp.size());
  }
  double shared_rate(double scale, double c) const {
    const double q = chance_agreement(scale);
    return (c - q) / (1.0 - q);
  }
  double ccp(double scale, double c) const {
    return (1.0 - shared_rate(scale, c)) * mean_square(scale) / c;
  }
};

template <typename F>
double bisect(F&& increasing, double target, double lo, double hi) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (increasing(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Calibration calibrate_pair(double c, double ccp, const CalibrationOptions& opt) {
  const int k = opt.classes;
  if (k <= 2) throw Error(ErrorCode::InvalidArgument, "calibration needs more than 2 classes");
  if (!(c > 0.0 && c <= 1.0) || !(ccp >= 0.0 && ccp <= 1.0)) {
    throw Error(ErrorCode::Infeasible, "targets must satisfy 0 < c <= 1 and 0 <= ccp <= 1");
  }
  if (opt.ids.size() != 2) throw Error(ErrorCode::InvalidArgument, "calibration builds a pair");
  if (!(opt.ramp_low > 0.0 && opt.ramp_high >= opt.ramp_low)) {
    throw Error(ErrorCode::InvalidArgument, "invalid accuracy ramp");
  }

  Calibration cal{{AnnotatorModel::identity(opt.ids[0], k, opt.seed + 1),
                   AnnotatorModel::identity(opt.ids[1], k, opt.seed + 2)},
                  1.0, 0.0, 1.0, 1.0};
  if (c == 1.0 && ccp == 1.0) return cal;

  PairModel model{k, {}};
  for (int y = 0; y < k; ++y) {
    model.ramp.push_back(opt.ramp_low + (opt.ramp_high - opt.ramp_low) * y / (k - 1));
  }
  // Above 1/k every per-class accuracy makes agreement increase with scale.
  const double lo = 1.0 / (k * opt.ramp_low);
  const double top = 1.0 / opt.ramp_low;
  if (model.chance_agreement(lo) > c) {
    throw Error(ErrorCode::Infeasible, "consistency rate below chance agreement");
  }
  double hi = top;
  if (model.chance_agreement(top) > c) {
    hi = bisect([&](double s) { return model.chance_agreement(s); }, c, lo, top);
  }
  if (model.chance_agreement(hi) >= 1.0) {
    throw Error(ErrorCode::Infeasible, "target pair unreachable by correlated annotators");
  }
  const double ccp_lo = model.ccp(lo, c);
  const double ccp_hi = model.ccp(hi, c);
  if (ccp < ccp_lo - 1e-12 || ccp > ccp_hi + 1e-12) {
    throw Error(ErrorCode::Infeasible,
                "ccp target outside the reachable range [" + std::to_string(ccp_lo) + ", " +
                    std::to_string(ccp_hi) + "] for this consistency rate");
  }
  const double scale = bisect([&](double s) { return model.ccp(s, c); }, ccp, lo, hi);
  const double beta = std::max(0.0, model.shared_rate(scale, c));

  SharedErrorChannel shared;
  shared.seed = opt.seed;
  shared.rate.assign(static_cast<std::size_t>(k), beta);
  // Shared mistakes go to a fixed confusable neighbour class.
  shared.wrong_label = Eigen::MatrixXd::Zero(k, k);
  for (int y = 0; y < k; ++y) shared.wrong_label(y, (y + 1) % k) = 1.0;

  auto acc = model.accuracies(scale);
  auto a = AnnotatorModel::per_class_accuracy(opt.ids[0], acc, opt.seed + 1);
  auto b = AnnotatorModel::per_class_accuracy(opt.ids[1], acc, opt.seed + 2);
  a.shared = shared;
  b.shared = shared;
  a.validate();
  b.validate();

  cal.annotators = {std::move(a), std::move(b)};
  cal.accuracy_scale = scale;
  cal.shared_error_rate = beta;
  cal.expected_consistency = beta + (1.0 - beta) * model.chance_agreement(scale);
  cal.expected_ccp = (1.0 - beta) * model.mean_square(scale) / cal.expected_consistency;
  return cal;
}

}  // namespace hcl

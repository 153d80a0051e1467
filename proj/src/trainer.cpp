#include "hcl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "hcl/error.hpp"
#include "hcl/rng.hpp"

namespace hcl {

const char* to_string(TargetRefresh r) noexcept {
  return r == TargetRefresh::PerBatch ? "per-batch" : "per-epoch";
}

const char* to_string(InitScheme s) noexcept {
  return s == InitScheme::Zero ? "zero" : "scaled-uniform";
}

TargetRefresh target_refresh_from_string(std::string_view s) {
  if (s == "per-batch") return TargetRefresh::PerBatch;
  if (s == "per-epoch") return TargetRefresh::PerEpoch;
  throw Error(ErrorCode::Config, "unknown target refresh '" + std::string(s) + "'");
}

InitScheme init_scheme_from_string(std::string_view s) {
  if (s == "zero") return InitScheme::Zero;
  if (s == "scaled-uniform") return InitScheme::ScaledUniform;
  throw Error(ErrorCode::Config, "unknown init scheme '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::Config, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::Config, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::Config, "learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::Config, "weight_decay must be >= 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw Error(ErrorCode::Config, "lr_decay_factor must lie in (0,1]");
  }
  if (lr_decay_every < 1) throw Error(ErrorCode::Config, "lr_decay_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::Config, "Adam betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorCode::Config, "epsilon must be > 0");
  if (!(init_scale >= 0.0)) throw Error(ErrorCode::Config, "init_scale must be >= 0");
  try {
    blend().validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }
}

double TrainConfig::learning_rate_at(int epoch) const {
  return learning_rate * std::pow(lr_decay_factor, epoch / lr_decay_every);
}

AdamW::AdamW(int classes, Eigen::Index dim, const TrainConfig& config)
    : beta1_(config.beta1),
      beta2_(config.beta2),
      epsilon_(config.epsilon),
      weight_decay_(config.weight_decay),
      m_w_(Eigen::MatrixXd::Zero(classes, dim)),
      v_w_(Eigen::MatrixXd::Zero(classes, dim)),
      m_b_(Eigen::VectorXd::Zero(classes)),
      v_b_(Eigen::VectorXd::Zero(classes)) {}

void AdamW::step(LinearModel& model, const Gradient& grad, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

  model.weights *= (1.0 - lr * weight_decay_);
  model.bias *= (1.0 - lr * weight_decay_);

  m_w_ = beta1_ * m_w_ + (1.0 - beta1_) * grad.weights;
  v_w_ = beta2_ * v_w_ + (1.0 - beta2_) * grad.weights.cwiseProduct(grad.weights);
  m_b_ = beta1_ * m_b_ + (1.0 - beta1_) * grad.bias;
  v_b_ = beta2_ * v_b_ + (1.0 - beta2_) * grad.bias.cwiseProduct(grad.bias);

  model.weights.array() -=
      lr * (m_w_.array() / bc1) / ((v_w_.array() / bc2).sqrt() + epsilon_);
  model.bias.array() -= lr * (m_b_.array() / bc1) / ((v_b_.array() / bc2).sqrt() + epsilon_);
}

namespace {

Eigen::VectorXd softmax_row(const Eigen::Ref<const Eigen::VectorXd>& z) {
  Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

HclObjective::HclObjective(const HclExamples& examples, const PrototypeBank* prototypes,
                           BlendConfig blend, RiskWeighting weighting)
    : examples_(examples), blend_(blend), weighting_(weighting) {
  blend_.validate();
  const bool any_consistent =
      std::any_of(examples.inconsistent.begin(), examples.inconsistent.end(),
                  [](std::uint8_t s) { return s == 0; });
  if (any_consistent && blend_.lambda > 0.0) {
    if (!prototypes) throw Error(ErrorCode::InvalidArgument, "prototypes required for lambda > 0");
    if (prototypes->classes() != examples.num_classes) {
      throw Error(ErrorCode::DimensionMismatch, "prototype count != number of classes");
    }
    similarity_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(examples.size()),
                                        examples.num_classes);
    for (std::size_t j = 0; j < examples.size(); ++j) {
      if (examples.inconsistent[j]) continue;
      const auto r = static_cast<Eigen::Index>(j);
      similarity_.row(r) =
          p_similarity(examples.features.row(r).transpose(), *prototypes, blend_.tau)
              .values()
              .transpose();
    }
  }
}

void HclObjective::freeze_targets(const LinearModel& model) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(examples_.size()),
                                            examples_.num_classes);
  for (std::size_t j = 0; j < examples_.size(); ++j) {
    if (examples_.inconsistent[j]) continue;
    const auto r = static_cast<Eigen::Index>(j);
    Eigen::VectorXd p;
    if (blend_.lambda == 1.0) {
      p = similarity_.row(r).transpose();
    } else {
      Eigen::VectorXd mod = softmax_row(logits(model, examples_.features.row(r).transpose()));
      p = blend_.lambda == 0.0 ? mod
                               : Eigen::VectorXd(blend_.lambda * similarity_.row(r).transpose() +
                                                 (1.0 - blend_.lambda) * mod);
    }
    t.row(r) = p.transpose();
  }
  frozen_ = std::move(t);
}

double HclObjective::evaluate(const LinearModel& model, std::span<const std::size_t> rows,
                              Gradient* grad) const {
  const int k = examples_.num_classes;
  const auto d = examples_.features.cols();
  if (model.classes() != k || model.dim() != d) {
    throw Error(ErrorCode::DimensionMismatch, "model shape does not match examples");
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(n, d);
  std::size_t n_human = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    x.row(r) = examples_.features.row(static_cast<Eigen::Index>(rows[r]));
    n_human += examples_.inconsistent[rows[r]];
  }
  const std::size_t n_consensus = rows.size() - n_human;

  double w_human = 0.0, w_consensus = 0.0;
  if (weighting_ == RiskWeighting::PartitionMean) {
    w_human = n_human ? 1.0 / static_cast<double>(n_human) : 0.0;
    w_consensus = n_consensus ? 1.0 / static_cast<double>(n_consensus) : 0.0;
  } else if (n > 0) {
    w_human = w_consensus = 1.0 / static_cast<double>(n);
  }

  Eigen::MatrixXd f = x * model.weights.transpose();
  f.rowwise() += model.bias.transpose();

  Eigen::MatrixXd g(n, k);
  double objective = 0.0;
  const double inv_k = 1.0 / static_cast<double>(k);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t j = rows[r];
    Eigen::VectorXd t;
    double w;
    if (examples_.inconsistent[j]) {
      t = Eigen::VectorXd::Constant(k, -1.0);
      t[examples_.labels[j]] = 1.0;
      w = w_human;
    } else {
      Eigen::VectorXd p;
      const auto jr = static_cast<Eigen::Index>(j);
      if (frozen_) {
        p = frozen_->row(jr).transpose();
      } else if (blend_.lambda == 1.0) {
        p = similarity_.row(jr).transpose();
      } else {
        Eigen::VectorXd mod = softmax_row(f.row(r).transpose());
        p = blend_.lambda == 0.0 ? mod
                                 : Eigen::VectorXd(blend_.lambda * similarity_.row(jr).transpose() +
                                                   (1.0 - blend_.lambda) * mod);
      }
      // sum_i p_i t_i = 2p - 1
      t = 2.0 * p.array() - 1.0;
      w = w_consensus;
    }
    const Eigen::VectorXd diff = f.row(r).transpose() - t;
    // sum_i p_i |f - t_i|^2 = |f - T|^2 + k - |T|^2 with T = sum_i p_i t_i.
    objective += w * inv_k * (diff.squaredNorm() + static_cast<double>(k) - t.squaredNorm());
    g.row(r) = (w * 2.0 * inv_k) * diff.transpose();
  }
  if (grad) {
    grad->weights = g.transpose() * x;
    grad->bias = g.colwise().sum().transpose();
  }
  return objective;
}

bool TrainReport::same_metrics(const TrainReport& o) const {
  if (method != o.method || train_size != o.train_size || epochs.size() != o.epochs.size() ||
      final_train_accuracy != o.final_train_accuracy ||
      final_test_accuracy != o.final_test_accuracy || warnings != o.warnings) {
    return false;
  }
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    const auto& a = epochs[e];
    const auto& b = o.epochs[e];
    if (a.epoch != b.epoch || a.learning_rate != b.learning_rate ||
        a.mean_objective != b.mean_objective || a.train_accuracy != b.train_accuracy ||
        a.test_accuracy != b.test_accuracy) {
      return false;
    }
  }
  return true;
}

double evaluate(const LinearModel& model, std::span<const Sample> samples) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "evaluation set is empty");
  std::size_t hit = 0;
  for (const auto& s : samples) {
    if (!s.ground_truth) {
      throw Error(ErrorCode::MissingGroundTruth, "sample '" + s.id + "' has no ground truth");
    }
    hit += argmax(logits(model, s.features)) == *s.ground_truth;
  }
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

namespace {

double label_accuracy(const LinearModel& model, const HclExamples& ex) {
  Eigen::MatrixXd f = ex.features * model.weights.transpose();
  f.rowwise() += model.bias.transpose();
  std::size_t hit = 0;
  for (std::size_t j = 0; j < ex.size(); ++j) {
    hit += argmax(f.row(static_cast<Eigen::Index>(j)).transpose()) == ex.labels[j];
  }
  return ex.size() ? static_cast<double>(hit) / static_cast<double>(ex.size()) : 0.0;
}

LinearModel initial_model(int k, Eigen::Index d, const TrainConfig& cfg) {
  auto model = LinearModel::zeros(k, d);
  if (cfg.init == InitScheme::ScaledUniform) {
    auto rng = keyed_engine(cfg.seed, "init");
    const double s = cfg.init_scale / std::sqrt(static_cast<double>(d));
    for (Eigen::Index r = 0; r < model.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < model.weights.cols(); ++c)
        model.weights(r, c) = s * (2.0 * unit_draw(rng) - 1.0);
  }
  return model;
}

TrainResult run_training(const HclExamples& examples, const PrototypeBank* prototypes,
                         const TrainConfig& cfg, const Dataset* test, std::string method) {
  cfg.validate();
  if (examples.size() == 0) throw Error(ErrorCode::InvalidArgument, "training set is empty");
  if (test && !test->empty() && test->dim() != examples.features.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "test features do not match training dimension");
  }

  const int k = examples.num_classes;
  const auto d = examples.features.cols();
  HclObjective objective(examples, prototypes, cfg.blend(), cfg.risk_weighting);
  LinearModel model = initial_model(k, d, cfg);
  AdamW optimizer(k, d, cfg);

  TrainReport report;
  report.method = std::move(method);
  report.train_size = examples.size();
  report.config = cfg;

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::size_t one_sided_batches = 0;
  const auto n_human = static_cast<std::size_t>(
      std::count(examples.inconsistent.begin(), examples.inconsistent.end(), std::uint8_t{1}));
  const bool mixed = n_human != 0 && n_human != examples.size();
  Gradient grad;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cfg.learning_rate_at(epoch);
    if (cfg.target_refresh == TargetRefresh::PerEpoch) objective.freeze_targets(model);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double objective_sum = 0.0;
    std::size_t batches = 0;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::span<const std::size_t> rows(order.data() + start, std::min(bs, order.size() - start));
      if (mixed) {
        std::size_t human = 0;
        for (auto j : rows) human += examples.inconsistent[j];
        if (human == 0 || human == rows.size()) ++one_sided_batches;
      }
      objective_sum += objective.evaluate(model, rows, &grad);
      optimizer.step(model, grad, lr);
      ++batches;
    }
    if (!model.finite()) throw Error(ErrorCode::NonFinite, "training diverged");

    EpochMetrics m;
    m.epoch = epoch;
    m.learning_rate = lr;
    m.mean_objective = objective_sum / static_cast<double>(batches);
    m.train_accuracy = label_accuracy(model, examples);
    if (test && !test->empty()) m.test_accuracy = evaluate(model, test->samples());
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(m);
  }
  if (cfg.target_refresh == TargetRefresh::PerEpoch) objective.unfreeze_targets();

  if (one_sided_batches) {
    report.warnings.push_back(std::to_string(one_sided_batches) +
                              " batch(es) had an empty partition; that term was dropped");
  }
  report.final_train_accuracy = report.epochs.back().train_accuracy;
  report.final_test_accuracy = report.epochs.back().test_accuracy;
  return {std::move(model), std::move(report)};
}

}  // namespace

TrainResult train_hcl(const Dataset& train, const AnnotationRun& run,
                      const PrototypeBank* prototypes, const TrainConfig& config,
                      const Dataset* test) {
  auto examples = make_hcl_examples(train, run);
  if (prototypes && prototypes->dim() != examples.features.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "prototype dimension != feature dimension");
  }
  return run_training(examples, prototypes, config, test, "HCL");
}

TrainResult train_baseline(const Dataset& train, const TrainingView& view,
                           const TrainConfig& config, const Dataset* test) {
  if (view.size() == 0) {
    throw Error(ErrorCode::InvalidArgument, "baseline view '" + view.name + "' is empty");
  }
  HclExamples ex;
  ex.num_classes = train.classes().size();
  ex.features.resize(static_cast<Eigen::Index>(view.size()), train.dim());
  for (std::size_t r = 0; r < view.size(); ++r) {
    const auto& s = train[view.indices.at(r)];
    if (s.features.size() != train.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "sample '" + s.id + "' has wrong dimension");
    }
    if (!train.classes().contains(view.labels[r])) {
      throw Error(ErrorCode::OutOfRange, "view label out of range for '" + s.id + "'");
    }
    ex.features.row(static_cast<Eigen::Index>(r)) = s.features.transpose();
  }
  ex.labels = view.labels;
  ex.inconsistent.assign(view.size(), 1);
  return run_training(ex, nullptr, config, test, view.name);
}

std::vector<SweepRow> lambda_sweep(const Dataset& train, const AnnotationRun& run,
                                   const PrototypeBank* prototypes, const TrainConfig& config,
                                   std::span<const double> grid, const Dataset* test) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "lambda grid is empty");
  for (double l : grid) {
    if (!(l >= 0.0 && l <= 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda outside [0,1]");
  }
  std::vector<SweepRow> rows;
  for (double l : grid) {
    TrainConfig cfg = config;
    cfg.lambda = l;
    auto result = train_hcl(train, run, prototypes, cfg, test);
    rows.push_back({l, result.report.final_train_accuracy, result.report.final_test_accuracy,
                    std::move(result.report)});
  }
  return rows;
}

}  // namespace hcl

#include <doctest.h>

#include <cmath>
#include <random>

#include "hcl/annotation.hpp"
#include "hcl/estimator.hpp"
#include "hcl/trainer.hpp"
#include "support.hpp"

using namespace hcl;
using hcl::test::error_code_of;

namespace {

// Direct transcription of the loss, term by term.
double loss_by_terms(const Eigen::VectorXd& f, int i) {
  const auto k = f.size();
  double s = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double t = j == i ? 1.0 : -1.0;
    s += (1.0 - f[j] * t) * (1.0 - f[j] * t);
  }
  return s / static_cast<double>(k);
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  return Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
}

ProbVector random_prob(std::mt19937_64& rng, int k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd p = Eigen::VectorXd::NullaryExpr(k, [&] { return u(rng); });
  return ProbVector(p / p.sum());
}

}  // namespace

TEST_CASE("loss examples") {
  for (int k : {2, 3, 10}) {
    for (int i = 0; i < k; ++i) {
      CHECK(loss(loss_target(k, i), i) == 0.0);
      CHECK(loss(Eigen::VectorXd::Zero(k), i) == doctest::Approx(1.0));
    }
  }
  CHECK(loss(Eigen::Vector2d(0.5, -0.5), 0) == doctest::Approx(0.25));
  CHECK(error_code_of([] { loss(Eigen::Vector3d(0, 0, 0), 3); }) == ErrorCode::OutOfRange);
  CHECK(error_code_of([] { loss(Eigen::Vector3d(0, 0, 0), -1); }) == ErrorCode::OutOfRange);
}

TEST_CASE("loss target has exactly one +1") {
  const auto t = loss_target(5, 2);
  CHECK(t == (Eigen::VectorXd(5) << -1, -1, 1, -1, -1).finished());
}

TEST_CASE("loss matches the term-by-term formula and is zero only at the target") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 2 + trial % 12;
    const int i = trial % k;
    const auto f = random_vector(rng, k, 2.0);
    const double l = loss(f, i);
    CHECK(l >= 0.0);
    CHECK(l == doctest::Approx(loss_by_terms(f, i)).epsilon(1e-12));
    CHECK(l > 0.0);
  }
}

TEST_CASE("loss_grad examples") {
  CHECK(loss_grad(loss_target(4, 1), 1).isZero(0));
  CHECK(loss_grad(Eigen::Vector2d::Zero(), 0) == Eigen::Vector2d(-1, 1));
}

TEST_CASE("loss_grad matches central differences (k=5)") {
  std::mt19937_64 rng(2);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const auto f = random_vector(rng, 5);
    const int i = trial % 5;
    const auto g = loss_grad(f, i);
    for (int j = 0; j < 5; ++j) {
      Eigen::VectorXd fp = f, fm = f;
      fp[j] += h;
      fm[j] -= h;
      const double fd = (loss_by_terms(fp, i) - loss_by_terms(fm, i)) / (2 * h);
      CHECK(std::abs(fd - g[j]) <= 1e-6 * std::max(1.0, std::abs(g[j])));
    }
  }
}

TEST_CASE("p_model") {
  const auto u = p_model(Eigen::Vector3d::Zero());
  for (int i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3.0));

  const auto big = p_model(Eigen::Vector2d(1000, 0));
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] >= 0.0);
  CHECK(big[1] < 1e-300);

  const auto p = p_model(Eigen::Vector3d(1, 2, 3));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-12));

  CHECK(error_code_of([] { p_model(Eigen::Vector2d(std::nan(""), 0)); }) == ErrorCode::NonFinite);
}

TEST_CASE("p_similarity") {
  SUBCASE("dominant prototype") {
    const int k = 4;
    PrototypeBank bank(Eigen::MatrixXd::Identity(k, 6).eval());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
    x[0] = 3.0;
    const auto p = p_similarity(x, bank, 100.0);
    const double expect = std::exp(100.0) / (std::exp(100.0) + (k - 1));
    CHECK(p[0] == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("equal cosines give a uniform vector") {
    Eigen::MatrixXd q(3, 3);
    q << 1, 0, 0, 0, 1, 0, 0, 0, 1;
    const auto p = p_similarity(Eigen::Vector3d(2, 2, 2), PrototypeBank(q), 100.0);
    for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("matches hand-computed scaled cosines (k=4, d=8)") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::MatrixXd q(4, 8);
      for (int r = 0; r < 4; ++r) q.row(r) = random_vector(rng, 8).transpose();
      const auto x = random_vector(rng, 8);
      const auto p = p_similarity(x, PrototypeBank(q), 100.0);
      std::vector<double> s(4);
      double mx = -1e300;
      for (int r = 0; r < 4; ++r) {
        double dot = 0, nq = 0, nx = 0;
        for (int c = 0; c < 8; ++c) {
          dot += q(r, c) * x[c];
          nq += q(r, c) * q(r, c);
          nx += x[c] * x[c];
        }
        s[r] = 100.0 * dot / std::sqrt(nq * nx);
        mx = std::max(mx, s[r]);
      }
      double z = 0;
      for (auto& v : s) z += std::exp(v - mx);
      for (int r = 0; r < 4; ++r) CHECK(std::abs(p[r] - std::exp(s[r] - mx) / z) <= 1e-9);
    }
  }
  SUBCASE("errors") {
    PrototypeBank bank(Eigen::MatrixXd::Identity(3, 3).eval());
    CHECK(error_code_of([&] { p_similarity(Eigen::Vector3d::Zero(), bank, 100.0); }) ==
          ErrorCode::InvalidArgument);
    CHECK(error_code_of([&] { p_similarity(Eigen::Vector2d(1, 1), bank, 100.0); }) ==
          ErrorCode::DimensionMismatch);
    CHECK(error_code_of([&] { p_similarity(Eigen::Vector3d(1, 1, 1), bank, 0.0); }) ==
          ErrorCode::InvalidArgument);
    Eigen::MatrixXd zero_row = Eigen::MatrixXd::Identity(3, 3);
    zero_row.row(1).setZero();
    CHECK(error_code_of([&] { PrototypeBank b(zero_row); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("blend") {
  const ProbVector a(Eigen::Vector2d(1, 0)), b(Eigen::Vector2d(0, 1));
  CHECK(blend(a, b, 1.0).values() == a.values());
  CHECK(blend(a, b, 0.0).values() == b.values());
  CHECK(blend(a, b, 0.5).values() == Eigen::Vector2d(0.5, 0.5));
  CHECK(error_code_of([&] { blend(a, b, 1.5); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([&] { blend(a, b, -0.1); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([] { BlendConfig{0.5, -1.0}.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("blend stays between its inputs") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + trial % 9;
    const auto s = random_prob(rng, k), m = random_prob(rng, k);
    const auto b = blend(s, m, u(rng));
    for (int i = 0; i < k; ++i) {
      CHECK(b[i] >= std::min(s[i], m[i]) - 1e-15);
      CHECK(b[i] <= std::max(s[i], m[i]) + 1e-15);
    }
  }
}

TEST_CASE("risk weighting names") {
  for (auto w : {RiskWeighting::PartitionMean, RiskWeighting::PriorWeighted})
    CHECK(risk_weighting_from_string(to_string(w)) == w);
  CHECK(error_code_of([] { risk_weighting_from_string("x"); }) == ErrorCode::Config);
}

namespace {

HclExamples two_row_examples() {
  HclExamples ex;
  ex.num_classes = 2;
  ex.features = Eigen::MatrixXd::Identity(2, 2);
  ex.labels = {0, 1};
  ex.inconsistent = {1, 0};
  return ex;
}

}  // namespace

TEST_CASE("empirical HCL risk on a hand example") {
  // Row 0 (human, y=0) has logits (0.5, -0.5); row 1 (consensus) has logits
  // (0.2, 0.4) and target p = (0.3, 0.7).
  const auto ex = two_row_examples();
  Eigen::MatrixXd w(2, 2);
  w << 0.5, 0.2, -0.5, 0.4;
  const LinearModel m{w, Eigen::Vector2d::Zero()};
  const std::vector<ProbVector> targets = {ProbVector::uniform(2), ProbVector(Eigen::Vector2d(0.3, 0.7))};
  const double human = 0.25;
  const double l0 = ((1 - 0.2) * (1 - 0.2) + (1 + 0.4) * (1 + 0.4)) / 2.0;
  const double l1 = ((1 + 0.2) * (1 + 0.2) + (1 - 0.4) * (1 - 0.4)) / 2.0;
  const double consensus = 0.3 * l0 + 0.7 * l1;

  const auto r = hcl_risk_with_targets(m, ex, targets);
  CHECK(r.human_term == doctest::Approx(human).epsilon(1e-12));
  CHECK(r.consensus_term == doctest::Approx(consensus).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(human + consensus).epsilon(1e-12));
  CHECK(r.warnings.empty());

  const auto prior = hcl_risk_with_targets(m, ex, targets, RiskWeighting::PriorWeighted);
  CHECK(prior.value == doctest::Approx((human + consensus) / 2.0).epsilon(1e-12));
}

TEST_CASE("empty partitions drop their term with a warning") {
  HclExamples ex = two_row_examples();
  ex.inconsistent = {1, 1};
  const LinearModel m{Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero()};
  const std::vector<ProbVector> t(2, ProbVector::uniform(2));
  const auto r = hcl_risk_with_targets(m, ex, t);
  const double mean = (loss(Eigen::Vector2d(1, 0), 0) + loss(Eigen::Vector2d(0, 1), 1)) / 2.0;
  CHECK(r.value == doctest::Approx(mean));
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("D_V") != std::string::npos);

  ex.inconsistent = {0, 0};
  const auto v = hcl_risk_with_targets(m, ex, t);
  REQUIRE(v.warnings.size() == 1);
  CHECK(v.warnings[0].find("D_H") != std::string::npos);
}

TEST_CASE("one-hot targets collapse to supervised loss on consensus labels") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 3 + trial % 4;
    const int n = 12;
    HclExamples ex;
    ex.num_classes = k;
    ex.features = Eigen::MatrixXd::NullaryExpr(n, 5, [&] { return std::normal_distribution<>(0, 1)(rng); });
    std::vector<ProbVector> targets;
    for (int j = 0; j < n; ++j) {
      ex.labels.push_back(j % k);
      ex.inconsistent.push_back(j < n / 2 ? 1 : 0);
      targets.push_back(ProbVector::one_hot(k, j % k));
    }
    const LinearModel m{Eigen::MatrixXd::NullaryExpr(k, 5, [&] { return std::normal_distribution<>(0, 1)(rng); }),
                        random_vector(rng, k)};
    double sup = 0;
    for (int j = 0; j < n; ++j) sup += loss(logits(m, ex.features.row(j).transpose()), ex.labels[j]);
    // equal partition sizes: both weightings reduce to the plain mean up to a factor
    CHECK(hcl_risk_with_targets(m, ex, targets, RiskWeighting::PriorWeighted).value ==
          doctest::Approx(sup / n).epsilon(1e-12));
    CHECK(hcl_risk_with_targets(m, ex, targets, RiskWeighting::PartitionMean).value ==
          doctest::Approx(2.0 * sup / n).epsilon(1e-12));
  }
}

TEST_CASE("empirical_hcl_risk uses blend(p_sim, p_model) as the target") {
  std::mt19937_64 rng(9);
  const int k = 4, n = 10, d = 6;
  HclExamples ex;
  ex.num_classes = k;
  ex.features = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return std::normal_distribution<>(0, 1)(rng); });
  for (int j = 0; j < n; ++j) {
    ex.labels.push_back(j % k);
    ex.inconsistent.push_back(j % 3 == 0 ? 1 : 0);
  }
  const PrototypeBank bank(Eigen::MatrixXd::NullaryExpr(k, d, [&] { return std::normal_distribution<>(0, 1)(rng); }));
  const LinearModel m{Eigen::MatrixXd::NullaryExpr(k, d, [&] { return std::normal_distribution<>(0, 0.3)(rng); }),
                      random_vector(rng, k)};
  for (double lambda : {0.0, 0.3, 1.0}) {
    const BlendConfig cfg{lambda, 10.0};
    std::vector<ProbVector> t;
    for (int j = 0; j < n; ++j) {
      const Eigen::VectorXd x = ex.features.row(j).transpose();
      t.push_back(blend(p_similarity(x, bank, 10.0), p_model(logits(m, x)), lambda));
    }
    CHECK(empirical_hcl_risk(m, ex, cfg, bank).value ==
          doctest::Approx(hcl_risk_with_targets(m, ex, t).value).epsilon(1e-12));
  }
}

namespace {

struct ObjectiveFixture {
  HclExamples ex;
  PrototypeBank bank;
  LinearModel model;
};

ObjectiveFixture objective_fixture(std::mt19937_64& rng, int k, int n, int d) {
  std::normal_distribution<double> g(0.0, 1.0);
  HclExamples ex;
  ex.num_classes = k;
  ex.features = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return g(rng); });
  for (int j = 0; j < n; ++j) {
    ex.labels.push_back(static_cast<LabelId>(rng() % static_cast<unsigned>(k)));
    ex.inconsistent.push_back(rng() % 2);
  }
  PrototypeBank bank(Eigen::MatrixXd::NullaryExpr(k, d, [&] { return g(rng); }));
  LinearModel m{Eigen::MatrixXd::NullaryExpr(k, d, [&] { return 0.3 * g(rng); }),
                Eigen::VectorXd::NullaryExpr(k, [&] { return 0.3 * g(rng); })};
  return {std::move(ex), std::move(bank), std::move(m)};
}

}  // namespace

TEST_CASE("batch objective agrees with the direct risk loop") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 40; ++trial) {
    auto fx = objective_fixture(rng, 3 + trial % 5, 16, 4);
    for (auto weighting : {RiskWeighting::PartitionMean, RiskWeighting::PriorWeighted}) {
      const BlendConfig cfg{trial % 2 ? 1.0 : 0.4, 100.0};
      HclObjective obj(fx.ex, &fx.bank, cfg, weighting);
      std::vector<std::size_t> rows(fx.ex.size());
      for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = j;
      const double closed = obj.evaluate(fx.model, rows);
      const double direct = empirical_hcl_risk(fx.model, fx.ex, cfg, fx.bank, weighting).value;
      CHECK(closed == doctest::Approx(direct).epsilon(1e-10));
    }
  }
}

TEST_CASE("batch objective gradient matches central differences with frozen targets") {
  std::mt19937_64 rng(12);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    auto fx = objective_fixture(rng, 3 + trial % 4, 10, 3);
    const BlendConfig cfg{trial % 3 == 0 ? 1.0 : 0.5, 100.0};
    HclObjective obj(fx.ex, &fx.bank, cfg, RiskWeighting::PartitionMean);
    obj.freeze_targets(fx.model);
    std::vector<std::size_t> rows = {0, 2, 3, 5, 7, 9};
    Gradient g;
    obj.evaluate(fx.model, rows, &g);
    auto m = fx.model;
    for (Eigen::Index r = 0; r < m.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.weights.cols(); ++c) {
        const double w0 = m.weights(r, c);
        m.weights(r, c) = w0 + h;
        const double up = obj.evaluate(m, rows);
        m.weights(r, c) = w0 - h;
        const double down = obj.evaluate(m, rows);
        m.weights(r, c) = w0;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - g.weights(r, c)) <= 1e-6 * std::max(1.0, std::abs(fd)));
      }
      const double b0 = m.bias[r];
      m.bias[r] = b0 + h;
      const double up = obj.evaluate(m, rows);
      m.bias[r] = b0 - h;
      const double down = obj.evaluate(m, rows);
      m.bias[r] = b0;
      CHECK(std::abs((up - down) / (2 * h) - g.bias[r]) <= 1e-6 * std::max(1.0, std::abs(g.bias[r])));
    }
  }
}

TEST_CASE("batch objective weights each partition by its own batch count") {
  // Two human rows and one consensus row: PartitionMean weights 1/2 and 1/1.
  HclExamples ex;
  ex.num_classes = 3;
  ex.features = Eigen::MatrixXd::Identity(3, 3);
  ex.labels = {0, 1, 2};
  ex.inconsistent = {1, 1, 0};
  const PrototypeBank bank(Eigen::MatrixXd::Identity(3, 3).eval());
  const LinearModel m{0.5 * Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3)};
  HclObjective obj(ex, &bank, BlendConfig{1.0, 100.0}, RiskWeighting::PartitionMean);
  const std::vector<std::size_t> rows = {0, 1, 2};
  const auto p2 = p_similarity(Eigen::Vector3d(0, 0, 1), bank, 100.0);
  Eigen::VectorXd f2 = logits(m, Eigen::Vector3d(0, 0, 1));
  double consensus = 0;
  for (int i = 0; i < 3; ++i) consensus += p2[i] * loss(f2, i);
  const double human = (loss(logits(m, Eigen::Vector3d(1, 0, 0)), 0) + loss(logits(m, Eigen::Vector3d(0, 1, 0)), 1)) / 2.0;
  CHECK(obj.evaluate(m, rows) == doctest::Approx(human + consensus).epsilon(1e-12));
}

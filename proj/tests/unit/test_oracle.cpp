#include <doctest.h>

#include <random>

#include "hcl/estimator.hpp"
#include "hcl/oracle.hpp"
#include "support.hpp"

using namespace hcl;
using hcl::test::error_code_of;

namespace {

LinearModel random_model(std::mt19937_64& rng, int k, int d) {
  std::normal_distribution<double> g(0.0, 1.0);
  return {Eigen::MatrixXd::NullaryExpr(k, d, [&] { return g(rng); }),
          Eigen::VectorXd::NullaryExpr(k, [&] { return g(rng); })};
}

// Cell-by-cell sums, independent of the oracle's marginal bookkeeping:
// ordinary risk weights L(f, y) by every cell; the HCL form uses L(f, Y) on
// s=1 cells and L(f, y) on s=0 cells.
std::pair<double, double> risks_by_cells(const DiscreteJoint& j, const LinearModel& m,
                                         const Eigen::MatrixXd& points) {
  double risk = 0, hcl = 0;
  for (int x = 0; x < j.points(); ++x) {
    const Eigen::VectorXd f = logits(m, points.row(x).transpose());
    for (int y = 0; y < j.classes(); ++y)
      for (int c = 0; c < j.classes(); ++c)
        for (int s = 0; s < 2; ++s) {
          const double p = j.at(x, y, c, s);
          risk += p * loss(f, y);
          hcl += p * loss(f, s == 1 ? c : y);
        }
  }
  return {risk, hcl};
}

}  // namespace

TEST_CASE("random joints are valid") {
  std::mt19937_64 rng(1);
  for (auto shape : {JointShape::General, JointShape::NoDiscrepancy, JointShape::AllDiscrepancy,
                     JointShape::ConsensusCorrect}) {
    const auto j = random_joint(3, 4, rng, shape);
    CHECK_FALSE(j.violation().has_value());
    CHECK(j.total() == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("label decomposition holds on random joints") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 2 + trial % 4, n = 1 + trial % 4;
    CHECK(oracle_label_decomposition(random_joint(n, k, rng)) <= 1e-12);
  }
}

TEST_CASE("label decomposition boundaries") {
  std::mt19937_64 rng(3);
  for (auto shape : {JointShape::NoDiscrepancy, JointShape::AllDiscrepancy, JointShape::ConsensusCorrect}) {
    for (int trial = 0; trial < 50; ++trial) CHECK(oracle_label_decomposition(random_joint(3, 3, rng, shape)) <= 1e-12);
  }
}

TEST_CASE("a point with zero mass is skipped") {
  std::mt19937_64 rng(4);
  auto j = random_joint(2, 3, rng);
  for (int y = 0; y < 3; ++y)
    for (int c = 0; c < 3; ++c)
      for (int s = 0; s < 2; ++s) j.at(1, y, c, s) = 0.0;
  j.normalize();
  CHECK(oracle_label_decomposition(j) <= 1e-12);
}

TEST_CASE("invalid joints are rejected") {
  std::mt19937_64 rng(5);
  auto j = random_joint(2, 3, rng);
  j.at(0, 0, 1, 1) = 0.1;  // consistent but wrong
  j.normalize();
  REQUIRE(j.violation().has_value());
  CHECK(error_code_of([&] { oracle_label_decomposition(j); }) == ErrorCode::Precondition);
  const auto m = random_model(rng, 3, 2);
  CHECK(error_code_of([&] { oracle_risk_equivalence(j, m, Eigen::MatrixXd::Ones(2, 2)); }) ==
        ErrorCode::Precondition);

  auto neg = random_joint(2, 3, rng);
  neg.at(0, 0, 0, 0) = -0.01;
  CHECK(neg.violation().has_value());

  auto unnorm = random_joint(2, 3, rng);
  unnorm.at(0, 0, 0, 0) += 0.5;
  CHECK(unnorm.violation().has_value());
}

TEST_CASE("risk equivalence holds and matches an independent cell sum") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 2 + trial % 4, n = 1 + trial % 4, d = 3;
    const auto shape = static_cast<JointShape>(trial % 4);
    const auto j = random_joint(n, k, rng, shape);
    const auto m = random_model(rng, k, d);
    Eigen::MatrixXd pts = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return std::normal_distribution<>(0, 1)(rng); });
    const auto r = oracle_risk_equivalence(j, m, pts);
    CHECK(r.gap <= 1e-10);
    const auto [risk, hcl] = risks_by_cells(j, m, pts);
    CHECK(std::abs(r.risk - risk) <= 1e-10);
    CHECK(std::abs(r.hcl_risk - hcl) <= 1e-10);
  }
}

TEST_CASE("risk equivalence oracle checks shapes") {
  std::mt19937_64 rng(7);
  const auto j = random_joint(2, 3, rng);
  CHECK(error_code_of([&] { oracle_risk_equivalence(j, random_model(rng, 3, 2), Eigen::MatrixXd::Ones(3, 2)); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(error_code_of([&] { oracle_risk_equivalence(j, random_model(rng, 4, 2), Eigen::MatrixXd::Ones(2, 2)); }) ==
        ErrorCode::DimensionMismatch);
}

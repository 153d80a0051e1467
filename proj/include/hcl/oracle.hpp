#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hcl/domain.hpp"

namespace hcl {

// Finite joint table P(x, y, Y, s) over |X| points, true label y, HCL label Y
// and consistency flag s. Used to check the risk reformulation by exhaustive
// enumeration.
class DiscreteJoint {
 public:
  DiscreteJoint(int points, int classes);

  int points() const noexcept { return points_; }
  int classes() const noexcept { return classes_; }

  double& at(int x, int y, int hcl_label, int s);
  double at(int x, int y, int hcl_label, int s) const;

  double total() const;
  void normalize();

  // Describes the first cell breaking nonnegativity, normalization or the
  // rule P(y=i, Y=j != i, s=1 | x) = 0.
  std::optional<std::string> violation() const;

 private:
  std::size_t offset(int x, int y, int hcl_label, int s) const;

  int points_;
  int classes_;
  std::vector<double> table_;
};

enum class JointShape {
  General,
  NoDiscrepancy,     // P(s=1) = 0
  AllDiscrepancy,    // P(s=1) = 1
  ConsensusCorrect,  // P(s=0) = 1 and y = Y almost surely
};

// Random positive table, cells forbidden by the shape or by the s=1 rule
// zeroed, then renormalized.
DiscreteJoint random_joint(int points, int classes, std::mt19937_64& rng,
                           JointShape shape = JointShape::General);

// max over x, i of |P(y=i|x) - [P(Y=i, s=1|x) + sum_m P(y=i|Y=m,s=0,x) P(Y=m,s=0|x)]|.
// Conditionals on zero-probability events contribute 0. Throws
// Error(Precondition) for an invalid joint.
double oracle_label_decomposition(const DiscreteJoint& joint);

struct RiskEquivalence {
  double risk = 0.0;      // ordinary risk under P(y|x)
  double hcl_risk = 0.0;  // two-term HCL risk under the joint measure
  double gap = 0.0;
};

// points holds one feature row per x in X; the model supplies f(x).
RiskEquivalence oracle_risk_equivalence(const DiscreteJoint& joint, const LinearModel& model,
                               const Eigen::MatrixXd& points);

}  // namespace hcl

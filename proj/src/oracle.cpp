#include "hcl/oracle.hpp"

#include <cmath>
#include <sstream>

#include "hcl/error.hpp"
#include "hcl/estimator.hpp"

namespace hcl {

DiscreteJoint::DiscreteJoint(int points, int classes)
    : points_(points), classes_(classes) {
  if (points < 1 || classes < 2) {
    throw Error(ErrorCode::InvalidArgument, "joint needs at least one point and two classes");
  }
  table_.assign(static_cast<std::size_t>(points) * classes * classes * 2, 0.0);
}

std::size_t DiscreteJoint::offset(int x, int y, int hcl_label, int s) const {
  return ((static_cast<std::size_t>(x) * classes_ + y) * classes_ + hcl_label) * 2 + s;
}

double& DiscreteJoint::at(int x, int y, int hcl_label, int s) {
  return table_.at(offset(x, y, hcl_label, s));
}

double DiscreteJoint::at(int x, int y, int hcl_label, int s) const {
  return table_.at(offset(x, y, hcl_label, s));
}

double DiscreteJoint::total() const {
  double sum = 0.0;
  for (double v : table_) sum += v;
  return sum;
}

void DiscreteJoint::normalize() {
  const double z = total();
  if (!(z > 0.0)) throw Error(ErrorCode::InvalidArgument, "joint has no mass");
  for (double& v : table_) v /= z;
}

std::optional<std::string> DiscreteJoint::violation() const {
  for (int x = 0; x < points_; ++x) {
    for (int y = 0; y < classes_; ++y) {
      for (int j = 0; j < classes_; ++j) {
        for (int s = 0; s < 2; ++s) {
          const double v = at(x, y, j, s);
          std::ostringstream cell;
          cell << "(x=" << x << ", y=" << y << ", Y=" << j << ", s=" << s << ")";
          if (!(v >= 0.0) || !std::isfinite(v)) return "negative or non-finite cell " + cell.str();
          if (s == 1 && j != y && v != 0.0) {
            return "corrected label differs from true label at " + cell.str();
          }
        }
      }
    }
  }
  if (std::abs(total() - 1.0) > 1e-9) return "table does not sum to 1";
  return std::nullopt;
}

DiscreteJoint random_joint(int points, int classes, std::mt19937_64& rng, JointShape shape) {
  DiscreteJoint joint(points, classes);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int x = 0; x < points; ++x) {
    for (int y = 0; y < classes; ++y) {
      for (int j = 0; j < classes; ++j) {
        for (int s = 0; s < 2; ++s) {
          double v = u(rng);
          if (s == 1 && j != y) v = 0.0;
          if (shape == JointShape::NoDiscrepancy && s == 1) v = 0.0;
          if (shape == JointShape::AllDiscrepancy && s == 0) v = 0.0;
          if (shape == JointShape::ConsensusCorrect && (s == 1 || j != y)) v = 0.0;
          joint.at(x, y, j, s) = v;
        }
      }
    }
  }
  joint.normalize();
  return joint;
}

namespace {

void require_valid(const DiscreteJoint& joint) {
  if (auto v = joint.violation()) throw Error(ErrorCode::Precondition, "invalid joint: " + *v);
}

double point_mass(const DiscreteJoint& joint, int x) {
  double p = 0.0;
  for (int y = 0; y < joint.classes(); ++y)
    for (int j = 0; j < joint.classes(); ++j)
      for (int s = 0; s < 2; ++s) p += joint.at(x, y, j, s);
  return p;
}

// P(y = i, x), marginalizing Y and s.
double true_label_mass(const DiscreteJoint& joint, int x, int i) {
  double p = 0.0;
  for (int j = 0; j < joint.classes(); ++j)
    for (int s = 0; s < 2; ++s) p += joint.at(x, i, j, s);
  return p;
}

// P(Y = m, s, x), marginalizing y.
double hcl_label_mass(const DiscreteJoint& joint, int x, int m, int s) {
  double p = 0.0;
  for (int y = 0; y < joint.classes(); ++y) p += joint.at(x, y, m, s);
  return p;
}

}  // namespace

double oracle_label_decomposition(const DiscreteJoint& joint) {
  require_valid(joint);
  const int k = joint.classes();
  double worst = 0.0;
  for (int x = 0; x < joint.points(); ++x) {
    const double px = point_mass(joint, x);
    if (px == 0.0) continue;
    for (int i = 0; i < k; ++i) {
      const double lhs = true_label_mass(joint, x, i) / px;
      double rhs = hcl_label_mass(joint, x, i, 1) / px;
      for (int m = 0; m < k; ++m) {
        const double pm = hcl_label_mass(joint, x, m, 0);
        if (pm == 0.0) continue;
        const double cond = joint.at(x, i, m, 0) / pm;  // P(y=i | Y=m, s=0, x)
        rhs += cond * (pm / px);
      }
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

RiskEquivalence oracle_risk_equivalence(const DiscreteJoint& joint, const LinearModel& model,
                               const Eigen::MatrixXd& points) {
  require_valid(joint);
  const int k = joint.classes();
  if (points.rows() != joint.points()) {
    throw Error(ErrorCode::DimensionMismatch, "one feature row per joint point required");
  }
  if (model.classes() != k) {
    throw Error(ErrorCode::DimensionMismatch, "model class count != joint class count");
  }
  RiskEquivalence r;
  for (int x = 0; x < joint.points(); ++x) {
    const double px = point_mass(joint, x);
    if (px == 0.0) continue;
    const Eigen::VectorXd f = logits(model, points.row(x).transpose());

    for (int i = 0; i < k; ++i) r.risk += px * (true_label_mass(joint, x, i) / px) * loss(f, i);

    for (int m = 0; m < k; ++m) {
      // s = 1: the corrected label is the supervision.
      r.hcl_risk += hcl_label_mass(joint, x, m, 1) * loss(f, m);
      // s = 0: expected loss under P(y | Y=m, s=0, x).
      const double pm = hcl_label_mass(joint, x, m, 0);
      if (pm == 0.0) continue;
      double expected = 0.0;
      for (int i = 0; i < k; ++i) expected += (joint.at(x, i, m, 0) / pm) * loss(f, i);
      r.hcl_risk += pm * expected;
    }
  }
  r.gap = std::abs(r.risk - r.hcl_risk);
  return r;
}

}  // namespace hcl

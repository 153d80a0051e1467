#pragma once

#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hcl/domain.hpp"
#include "hcl/error.hpp"

namespace hcl::test {

inline ClassSpace class_space(int k) {
  std::vector<std::string> names;
  for (int i = 0; i < k; ++i) names.push_back("c" + std::to_string(i));
  return ClassSpace(names);
}

inline Sample make_sample(std::string id, std::initializer_list<double> x,
                          std::optional<LabelId> y = std::nullopt) {
  Sample s;
  s.id = std::move(id);
  s.features = Eigen::VectorXd(static_cast<Eigen::Index>(x.size()));
  Eigen::Index i = 0;
  for (double v : x) s.features[i++] = v;
  s.ground_truth = y;
  return s;
}

// Samples "s0".."s{n-1}" with 2-d features and the given labels.
inline Dataset labelled_dataset(int k, const std::vector<LabelId>& labels) {
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    samples.push_back(make_sample("s" + std::to_string(i),
                                  {static_cast<double>(i) + 1.0, 1.0 - static_cast<double>(i)},
                                  labels[i]));
  }
  return Dataset(class_space(k), std::move(samples));
}

template <typename F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::logic_error("expected hcl::Error");
}

}  // namespace hcl::test

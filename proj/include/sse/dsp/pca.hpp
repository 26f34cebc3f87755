#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sse/core/error.hpp"

namespace sse::dsp {

struct PcaModel {
  std::vector<double> mean;                 // d
  std::vector<std::vector<double>> components;  // k x d, orthonormal rows
  std::vector<double> explained_variance;   // k, descending

  bool fitted() const { return !components.empty(); }
  std::size_t input_dim() const { return mean.size(); }
  std::size_t output_dim() const { return components.size(); }
};

/// Exact PCA from the eigendecomposition of the sample covariance. Each
/// component is signed so its largest-magnitude entry is positive.
inline PcaModel pca_fit(std::span<const std::vector<double>> vectors, std::size_t k) {
  require(!vectors.empty(), ErrorCode::NotEnoughData, "no vectors to fit");
  const std::size_t d = vectors.front().size();
  require(k >= 1 && k <= d, ErrorCode::InvalidRange, "k must lie in [1, d]");
  require(vectors.size() >= k + 1, ErrorCode::NotEnoughData,
          "need at least " + std::to_string(k + 1) + " vectors, got " + std::to_string(vectors.size()));
  const std::size_t n = vectors.size();

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (const auto& v : vectors) {
    require(v.size() == d, ErrorCode::ShapeMismatch, "vectors differ in dimension");
    mean += Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(d));
  }
  mean /= static_cast<double>(n);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (const auto& v : vectors) {
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(d)) - mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(c);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorCode::NotEnoughData, "eigendecomposition failed");

  PcaModel model;
  model.mean.assign(mean.data(), mean.data() + d);
  // Eigen returns ascending eigenvalues.
  for (std::size_t i = 0; i < k; ++i) {
    const auto col = static_cast<Eigen::Index>(d - 1 - i);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    model.components.emplace_back(v.data(), v.data() + d);
    model.explained_variance.push_back(std::max(0.0, solver.eigenvalues()(col)));
  }
  return model;
}

inline std::vector<double> pca_transform(const PcaModel& model, std::span<const double> v) {
  require(model.fitted(), ErrorCode::ModelNotFitted, "PCA model has not been fitted");
  require(v.size() == model.input_dim(), ErrorCode::ShapeMismatch,
          "expected dimension " + std::to_string(model.input_dim()) + ", got " + std::to_string(v.size()));
  std::vector<double> out(model.output_dim(), 0.0);
  for (std::size_t c = 0; c < model.output_dim(); ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += model.components[c][i] * (v[i] - model.mean[i]);
    out[c] = acc;
  }
  return out;
}

}  // namespace sse::dsp

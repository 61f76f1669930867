#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "modkit/error.hpp"
#include "modkit/numerics.hpp"

namespace modkit {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

/// Bias-corrected Adam. One moment pair per parameter matrix, fixed at construction.
class Adam {
 public:
  Adam() = default;

  template <typename Shapes>
  Adam(const Shapes& params, AdamConfig config) : config_(config) {
    for (const DenseMatrix& p : params) {
      first_.push_back(DenseMatrix::Zero(p.rows(), p.cols()));
      second_.push_back(DenseMatrix::Zero(p.rows(), p.cols()));
    }
  }

  Adam(std::initializer_list<DenseMatrix> shapes, AdamConfig config)
      : Adam(std::vector<DenseMatrix>(shapes), config) {}

  const AdamConfig& config() const noexcept { return config_; }
  std::int64_t steps() const noexcept { return steps_; }
  std::size_t slots() const noexcept { return first_.size(); }
  const DenseMatrix& first_moment(std::size_t i) const { return first_.at(i); }
  const DenseMatrix& second_moment(std::size_t i) const { return second_.at(i); }

  /// Applies one update in place. `params[i]` pairs with `grads[i]` and with slot i.
  void step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix* const> grads) {
    if (params.size() != first_.size() || grads.size() != first_.size())
      throw ShapeError("adam_step: parameter count does not match optimizer state");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& p = *params[i];
      const auto& g = *grads[i];
      if (p.rows() != first_[i].rows() || p.cols() != first_[i].cols() || g.rows() != p.rows() ||
          g.cols() != p.cols())
        throw ShapeError("adam_step: shape mismatch in slot " + std::to_string(i));
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      DenseMatrix& p = *params[i];
      const DenseMatrix& g = *grads[i];
      DenseMatrix& m = first_[i];
      DenseMatrix& v = second_[i];
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double gk = g.data()[k];
        double& mk = m.data()[k];
        double& vk = v.data()[k];
        mk = config_.beta1 * mk + (1.0 - config_.beta1) * gk;
        vk = config_.beta2 * vk + (1.0 - config_.beta2) * gk * gk;
        p.data()[k] -= config_.lr * (mk / c1) / (std::sqrt(vk / c2) + config_.eps_hat);
      }
    }
  }

 private:
  AdamConfig config_;
  std::vector<DenseMatrix> first_;
  std::vector<DenseMatrix> second_;
  std::int64_t steps_ = 0;
};

}  // namespace modkit

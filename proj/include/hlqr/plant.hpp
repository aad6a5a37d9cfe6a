#pragma once

#include <memory>
#include <vector>

#include "hlqr/lqr.hpp"
#include "hlqr/matkit.hpp"

namespace hlqr {

/// Black-box continuous-time plant x' = f(x, u). Learners only see this
/// interface. Implementations are immutable, so one instance can serve
/// concurrent simulations.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual Index state_dim() const = 0;
  virtual Index input_dim() const = 0;
  /// Writes f(x, u) into dx (resized as needed).
  virtual void derivative(const Vector& x, const Vector& u, Vector& dx) const = 0;
};

/// x' = A x + B u.
class LinearPlant final : public Plant {
 public:
  LinearPlant(Matrix a, Matrix b);
  Index state_dim() const override { return a_.rows(); }
  Index input_dim() const override { return b_.cols(); }
  void derivative(const Vector& x, const Vector& u, Vector& dx) const override;

 private:
  Matrix a_;
  Matrix b_;
};

/// Network of independent agents, x_i' = A_i x_i + B_i u_i, all of the same
/// dimensions. Cost per call is linear in the number of agents.
class AgentPlant final : public Plant {
 public:
  explicit AgentPlant(std::vector<AgentModel> agents);
  Index state_dim() const override { return n_ * static_cast<Index>(agents_.size()); }
  Index input_dim() const override { return m_ * static_cast<Index>(agents_.size()); }
  void derivative(const Vector& x, const Vector& u, Vector& dx) const override;

 private:
  std::vector<AgentModel> agents_;
  Index n_ = 0;
  Index m_ = 0;
};

/// View of a base plant in transformed coordinates xi = S x, v = M u with S,
/// M having orthonormal rows. The base is driven by x = S^T xi, u = M^T v and
/// its derivative is projected back with S. When the subspace is invariant
/// (homogeneous agents) this is exactly the cluster dynamics; otherwise it is
/// the block-diagonal part of the transformed plant.
class ProjectedPlant final : public Plant {
 public:
  ProjectedPlant(std::shared_ptr<const Plant> base, Matrix state_map, Matrix input_map);
  Index state_dim() const override { return s_.rows(); }
  Index input_dim() const override { return m_.rows(); }
  void derivative(const Vector& x, const Vector& u, Vector& dx) const override;

 private:
  std::shared_ptr<const Plant> base_;
  Matrix s_;
  Matrix m_;
};

}  // namespace hlqr

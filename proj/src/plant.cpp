#include "hlqr/plant.hpp"

namespace hlqr {

LinearPlant::LinearPlant(Matrix a, Matrix b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != a_.cols() || b_.rows() != a_.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "plant A must be square with B conforming");
  }
}

void LinearPlant::derivative(const Vector& x, const Vector& u, Vector& dx) const {
  dx.noalias() = a_ * x;
  if (b_.cols() > 0) dx.noalias() += b_ * u;
}

AgentPlant::AgentPlant(std::vector<AgentModel> agents) : agents_(std::move(agents)) {
  if (agents_.empty()) throw Error(ErrorCode::DimensionMismatch, "no agents");
  n_ = agents_.front().n();
  m_ = agents_.front().m();
  for (const auto& a : agents_) {
    a.validate();
    if (a.n() != n_ || a.m() != m_) {
      throw Error(ErrorCode::DimensionMismatch, "agents must share state and input dimensions");
    }
  }
}

void AgentPlant::derivative(const Vector& x, const Vector& u, Vector& dx) const {
  dx.resize(state_dim());
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    const Index xs = static_cast<Index>(i) * n_;
    const Index us = static_cast<Index>(i) * m_;
    dx.segment(xs, n_).noalias() = agents_[i].A * x.segment(xs, n_);
    dx.segment(xs, n_).noalias() += agents_[i].B * u.segment(us, m_);
  }
}

ProjectedPlant::ProjectedPlant(std::shared_ptr<const Plant> base, Matrix state_map,
                               Matrix input_map)
    : base_(std::move(base)), s_(std::move(state_map)), m_(std::move(input_map)) {
  if (!base_ || s_.cols() != base_->state_dim() || m_.cols() != base_->input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "projection maps do not match the base plant");
  }
}

void ProjectedPlant::derivative(const Vector& x, const Vector& u, Vector& dx) const {
  const Vector full_x = s_.transpose() * x;
  const Vector full_u = m_.transpose() * u;
  Vector full_dx;
  base_->derivative(full_x, full_u, full_dx);
  dx.noalias() = s_ * full_dx;
}

}  // namespace hlqr

#pragma once

#include <cstdint>

#include "hlqr/matkit.hpp"

namespace hlqr {

/// Sum-of-sinusoids exploration signal added to the behaviour policy.
/// Each input channel gets its own `component_count` frequencies drawn
/// uniformly from [min_frequency, max_frequency] rad/s and phases drawn
/// uniformly from [0, 2 pi).
struct ExcitationConfig {
  int component_count = 12;
  double min_frequency = 0.1;
  double max_frequency = 10.0;
  double amplitude = 1.0;
  std::uint64_t seed = 1;

  /// amplitude == 0 is accepted (it yields an unexcited run, useful for
  /// probing the rank check); negative or non-finite values are not.
  void validate() const;
};

/// One decoupled LQR instance produced by the decomposition: N_i agents in
/// the transformed coordinates, weights kron(Phi_i, Q0) and kron(Psi_i, R0).
struct ClusterProblem {
  std::size_t index = 0;
  Index agents = 0;  // N_i
  Index offset = 0;  // first row of this cluster in T
  Index n = 0;       // per-agent state dimension
  Index m = 0;       // per-agent input dimension
  Matrix q_block;
  Matrix r_block;
  Matrix initial_gain;  // input_dim x state_dim; empty until supplied
  ExcitationConfig excitation;
  double sample_interval = 0.1;  // window length delta
  Index window_count = 0;        // L; 0 selects 2 * unknown_count()

  Index state_dim() const { return n * agents; }
  Index input_dim() const { return m * agents; }

  /// Unknowns of the integral Bellman regression: symmetric P plus the gain.
  Index unknown_count() const {
    const Index nc = state_dim();
    return nc * (nc + 1) / 2 + input_dim() * nc;
  }

  Index windows() const { return window_count > 0 ? window_count : 2 * unknown_count(); }

  /// Checks dimensions, Q block PSD, R block PD and L >= q.
  void validate() const;
};

}  // namespace hlqr

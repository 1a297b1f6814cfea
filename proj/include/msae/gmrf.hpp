#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "msae/rng.hpp"
#include "msae/survey.hpp"

namespace msae {

/// Role of one column of the ICAR eigenbasis.
enum class ModeKind {
  Positive,       ///< eigenvector orthogonal to its component's constant vector
  ComponentNull,  ///< normalized indicator of a component with >= 2 nodes
  Singleton,      ///< indicator of an isolated node
};

/// ICAR structure Q = D - W with its per-component spectral decomposition.
/// The eigenbasis is block diagonal over components; positive-mode vectors
/// are centered within their component so the sum-to-zero constraint holds
/// exactly in that basis.
struct IcarStructure {
  Eigen::SparseMatrix<double> precision;  ///< current (possibly scaled) precision
  std::vector<std::vector<int>> components;
  std::vector<double> scaling_factor;     ///< factor applied by the last scaling, per component
  std::vector<bool> singleton;            ///< per component
  bool scaled = false;

  Eigen::MatrixXd basis;        ///< R x R orthonormal
  Eigen::VectorXd eigenvalues;  ///< precision eigenvalue per column (0 for null/singleton modes)
  std::vector<ModeKind> kinds;
  std::vector<int> mode_component;

  int size() const { return static_cast<int>(basis.rows()); }
  bool has_islands() const;
  std::vector<int> positive_modes() const;

  /// Diagonal of the generalized inverse of the current precision on the
  /// sum-to-zero subspace of each component; 0 on isolated nodes.
  Eigen::VectorXd marginal_variances() const;

  /// Geometric mean of marginal_variances() over one non-singleton component.
  double geometric_mean_variance(int component) const;

  /// `{"components": [...], "scaling_factor": [...], "marginal_variance": [...]}`
  std::string dump_json() const;
};

/// Unscaled Q = D - W; row sums are exactly zero.
IcarStructure build_icar_precision(const AdjacencyGraph& graph);

/// Rescales each non-singleton component so the geometric mean of its
/// constrained marginal variances is 1. Applied to an already-scaled
/// structure the factors come out as 1.
IcarStructure compute_scaling(const IcarStructure& icar);

/// Convenience: build then scale.
IcarStructure scaled_icar(const AdjacencyGraph& graph);

struct Bym2Effect {
  double sigma = 1.0;
  double rho = 0.5;
  Eigen::VectorXd v_star;
  Eigen::VectorXd u_star;
};

/// s = sigma * (sqrt(1 - rho) v* + sqrt(rho) u*). With `icar`, u* must sum
/// to zero on every component and isolated nodes take s = sigma * v*;
/// without it the whole vector is treated as one connected component.
Eigen::VectorXd realize_bym2(const Bym2Effect& effect, const IcarStructure* icar = nullptr);

/// Draw of u* from the scaled ICAR density restricted to the sum-to-zero
/// subspace; isolated nodes are 0.
Eigen::VectorXd sample_constrained_icar(const IcarStructure& icar, Rng& rng);
Eigen::VectorXd sample_constrained_icar(const IcarStructure& icar, std::uint64_t seed);

}  // namespace msae

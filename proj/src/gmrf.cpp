#include "msae/gmrf.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "msae/error.hpp"

namespace msae {

bool IcarStructure::has_islands() const {
  for (bool s : singleton)
    if (s) return true;
  return false;
}

std::vector<int> IcarStructure::positive_modes() const {
  std::vector<int> out;
  for (std::size_t k = 0; k < kinds.size(); ++k)
    if (kinds[k] == ModeKind::Positive) out.push_back(static_cast<int>(k));
  return out;
}

Eigen::VectorXd IcarStructure::marginal_variances() const {
  Eigen::VectorXd var = Eigen::VectorXd::Zero(size());
  for (int k : positive_modes()) var += basis.col(k).cwiseAbs2() / eigenvalues(k);
  return var;
}

double IcarStructure::geometric_mean_variance(int component) const {
  const auto var = marginal_variances();
  double log_sum = 0.0;
  for (int node : components[static_cast<std::size_t>(component)]) log_sum += std::log(var(node));
  return std::exp(log_sum / static_cast<double>(components[static_cast<std::size_t>(component)].size()));
}

std::string IcarStructure::dump_json() const {
  nlohmann::json doc;
  doc["components"] = components;
  doc["scaling_factor"] = scaling_factor;
  doc["singleton"] = singleton;
  const auto var = marginal_variances();
  doc["marginal_variance"] = std::vector<double>(var.data(), var.data() + var.size());
  return doc.dump(2);
}

IcarStructure build_icar_precision(const AdjacencyGraph& graph) {
  const int R = graph.size();
  IcarStructure icar;
  icar.components = graph.components();

  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < R; ++i) triplets.emplace_back(i, i, static_cast<double>(graph.degree(i)));
  for (auto [a, b] : graph.edges()) {
    triplets.emplace_back(a, b, -1.0);
    triplets.emplace_back(b, a, -1.0);
  }
  icar.precision.resize(R, R);
  icar.precision.setFromTriplets(triplets.begin(), triplets.end());

  icar.basis = Eigen::MatrixXd::Zero(R, R);
  icar.eigenvalues = Eigen::VectorXd::Zero(R);
  icar.kinds.assign(static_cast<std::size_t>(R), ModeKind::Singleton);
  icar.mode_component.assign(static_cast<std::size_t>(R), 0);
  icar.scaling_factor.assign(icar.components.size(), 1.0);
  icar.singleton.assign(icar.components.size(), false);

  const Eigen::MatrixXd dense = Eigen::MatrixXd(icar.precision);
  int col = 0;
  for (std::size_t comp = 0; comp < icar.components.size(); ++comp) {
    const auto& nodes = icar.components[comp];
    const int m = static_cast<int>(nodes.size());
    if (m == 1) {
      icar.singleton[comp] = true;
      icar.basis(nodes[0], col) = 1.0;
      icar.kinds[static_cast<std::size_t>(col)] = ModeKind::Singleton;
      icar.mode_component[static_cast<std::size_t>(col)] = static_cast<int>(comp);
      ++col;
      continue;
    }
    Eigen::MatrixXd sub(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) sub(i, j) = dense(nodes[static_cast<std::size_t>(i)], nodes[static_cast<std::size_t>(j)]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sub);
    if (eig.info() != Eigen::Success) throw NumericalError("ICAR eigendecomposition failed");

    // The smallest eigenvalue belongs to the constant vector of a connected component.
    for (int i = 0; i < m; ++i) icar.basis(nodes[static_cast<std::size_t>(i)], col) = 1.0 / std::sqrt(m);
    icar.kinds[static_cast<std::size_t>(col)] = ModeKind::ComponentNull;
    icar.mode_component[static_cast<std::size_t>(col)] = static_cast<int>(comp);
    ++col;
    for (int k = 1; k < m; ++k) {
      Eigen::VectorXd v = eig.eigenvectors().col(k);
      v.array() -= v.mean();
      v.normalize();
      for (int i = 0; i < m; ++i) icar.basis(nodes[static_cast<std::size_t>(i)], col) = v(i);
      icar.eigenvalues(col) = v.dot(sub * v);
      icar.kinds[static_cast<std::size_t>(col)] = ModeKind::Positive;
      icar.mode_component[static_cast<std::size_t>(col)] = static_cast<int>(comp);
      ++col;
    }
  }
  return icar;
}

IcarStructure compute_scaling(const IcarStructure& icar) {
  IcarStructure out = icar;
  const Eigen::VectorXd var = icar.marginal_variances();
  std::vector<double> node_factor(static_cast<std::size_t>(icar.size()), 1.0);
  for (std::size_t comp = 0; comp < icar.components.size(); ++comp) {
    if (icar.singleton[comp]) {
      out.scaling_factor[comp] = 1.0;
      continue;
    }
    double log_sum = 0.0;
    for (int node : icar.components[comp]) log_sum += std::log(var(node));
    const double factor = std::exp(log_sum / static_cast<double>(icar.components[comp].size()));
    out.scaling_factor[comp] = factor;
    for (int node : icar.components[comp]) node_factor[static_cast<std::size_t>(node)] = factor;
  }
  for (int k = 0; k < icar.size(); ++k)
    out.eigenvalues(k) *= out.scaling_factor[static_cast<std::size_t>(icar.mode_component[static_cast<std::size_t>(k)])];
  for (int outer = 0; outer < out.precision.outerSize(); ++outer)
    for (Eigen::SparseMatrix<double>::InnerIterator it(out.precision, outer); it; ++it)
      it.valueRef() *= node_factor[static_cast<std::size_t>(it.row())];
  out.scaled = true;
  return out;
}

IcarStructure scaled_icar(const AdjacencyGraph& graph) { return compute_scaling(build_icar_precision(graph)); }

Eigen::VectorXd realize_bym2(const Bym2Effect& effect, const IcarStructure* icar) {
  const auto n = effect.v_star.size();
  if (effect.u_star.size() != n) throw ValidationError("v* and u* lengths differ");
  if (!(effect.sigma >= 0.0)) throw ValidationError("sigma must be nonnegative");
  if (!(effect.rho >= 0.0 && effect.rho <= 1.0)) throw ValidationError("rho must lie in [0, 1]");

  std::vector<std::vector<int>> comps;
  if (icar) {
    if (icar->size() != n) throw ValidationError("effect length does not match the ICAR structure");
    comps = icar->components;
  } else {
    comps.emplace_back();
    for (int i = 0; i < n; ++i) comps.back().push_back(i);
  }

  Eigen::VectorXd s(n);
  for (const auto& nodes : comps) {
    if (nodes.size() == 1 && icar) {
      s(nodes[0]) = effect.sigma * effect.v_star(nodes[0]);
      continue;
    }
    double sum = 0.0;
    for (int i : nodes) sum += effect.u_star(i);
    if (std::abs(sum) > 1e-10)
      throw ValidationError("u* violates the sum-to-zero constraint (component sum " + std::to_string(sum) + ")");
    for (int i : nodes)
      s(i) = effect.sigma * (std::sqrt(1.0 - effect.rho) * effect.v_star(i) + std::sqrt(effect.rho) * effect.u_star(i));
  }
  return s;
}

Eigen::VectorXd sample_constrained_icar(const IcarStructure& icar, Rng& rng) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(icar.size());
  for (int k : icar.positive_modes()) u += icar.basis.col(k) * (rng.normal() / std::sqrt(icar.eigenvalues(k)));
  return u;
}

Eigen::VectorXd sample_constrained_icar(const IcarStructure& icar, std::uint64_t seed) {
  Rng rng(seed);
  return sample_constrained_icar(icar, rng);
}

}  // namespace msae

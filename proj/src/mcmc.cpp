#include "msae/mcmc.hpp"

#include "msae/error.hpp"

namespace msae {

std::string mu_column(int outcome, int region) {
  return "mu." + std::to_string(outcome + 1) + "." + std::to_string(region + 1);
}

int ModelFit::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j] == name) return static_cast<int>(j);
  return -1;
}

Eigen::VectorXd ModelFit::column(const std::string& name) const {
  const int j = column_index(name);
  if (j < 0) throw Error("fit has no column '" + name + "'");
  return draws.col(j);
}

Eigen::VectorXd ModelFit::chain_column(const std::string& name, int chain) const {
  const int j = column_index(name);
  if (j < 0) throw Error("fit has no column '" + name + "'");
  return draws.block(static_cast<Eigen::Index>(chain) * draws_per_chain, j, draws_per_chain, 1);
}

Eigen::MatrixXd ModelFit::mu_draws(int region) const {
  Eigen::MatrixXd out(draws.rows(), outcomes);
  for (int c = 0; c < outcomes; ++c) out.col(c) = column(mu_column(c, region));
  return out;
}

std::vector<int> ModelFit::thinned_rows(int count) const {
  const auto total = static_cast<int>(draws.rows());
  if (count <= 0 || count > total) throw ValidationError("cannot thin " + std::to_string(total) + " draws to " +
                                                         std::to_string(count));
  std::vector<int> rows(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s)
    rows[static_cast<std::size_t>(s)] = static_cast<int>((static_cast<long long>(s) * total) / count);
  return rows;
}

}  // namespace msae

// Collapsed Gibbs / adaptive Metropolis engine shared by the area- and
// unit-level models.
//
// Latent vector z = (f, h[, x]): fixed effects f (flat prior), the total
// region effects of every outcome in ICAR eigen-coordinates h (g_c = E h_c),
// and for the augmented area likelihood the per-region Stage-1 error x.
// Given the hyperparameters theta, z is Gaussian with precision
// P = P_data + prior(theta), so theta is updated on the marginal
// p(theta | y) with z integrated out, then z is drawn exactly.

#include <cmath>
#include <limits>
#include <sstream>

#include "msae/error.hpp"
#include "msae/gmrf.hpp"
#include "msae/mcmc.hpp"
#include "msae/parallel.hpp"
#include "msae/rng.hpp"

namespace msae {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kVarianceFloor = 1e-10;
// Precision of the pseudo-observations of the augmented area likelihood,
// relative to the largest Stage-1 precision. Much larger values lose the
// log-target to cancellation in the dense factorization.
constexpr double kAugmentedRelativePrecision = 1e4;
constexpr double kTargetAcceptance = 0.44;

double logit(double p) { return std::log(p / (1.0 - p)); }
double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

enum class CoordKind { LogSigma, LogitRho, LogSigmaEps, Lambda };

struct Coord {
  CoordKind kind;
  int outcome;
  std::string name;
  double step;
};

// Unit-level cluster summaries for one outcome.
struct ClusterStats {
  std::vector<int> n;
  std::vector<double> ybar;
  std::vector<double> ssw;
};

struct DataBlock {
  Eigen::MatrixXd P;
  Eigen::VectorXd b;
  double yWy = 0.0;
  double logdetW = 0.0;
};

struct Problem {
  bool unit = false;
  bool shared = false;
  bool bym = false;
  bool prior_only = false;
  int src = 1, dst = 0;
  int C = 0, R = 0;
  int nf = 0, nx = 0, p = 0;
  const IcarStructure* icar = nullptr;
  PriorConfig priors;
  std::map<std::string, double> fixed;
  std::vector<Coord> coords;

  // Area data, constant.
  DataBlock area;

  // Unit data.
  int K = 0;
  std::vector<int> cl_region;
  std::vector<bool> cl_rural;
  std::vector<ClusterStats> stats;  // per outcome
  bool omega_per_region = false;
  Eigen::VectorXd q;
  double omega_init_scale = 1.0;

  int h_index(int c, int k) const { return nf + c * R + k; }
  int beta_index(int c) const { return unit ? 2 * c : c; }
  int gamma_index(int c) const { return 2 * c + 1; }
  int omega_cols() const { return omega_per_region ? R : 1; }

  std::optional<double> fixed_value(const std::string& name) const {
    auto it = fixed.find(name);
    if (it == fixed.end()) return std::nullopt;
    return it->second;
  }
};

struct Hyper {
  std::vector<double> sigma, rho, sigma_eps;
  double lambda = 0.0;
  Eigen::MatrixXd log_omega;  // C x omega_cols
};

std::string idx(int i) { return std::to_string(i + 1); }

// Prior variance multiplier of mode k of outcome c's effect (in units of sigma^2).
double mode_scale(const Problem& pb, double rho, int k) {
  if (!pb.bym) return 1.0;
  switch (pb.icar->kinds[static_cast<std::size_t>(k)]) {
    case ModeKind::Positive:
      return (1.0 - rho) + rho / pb.icar->eigenvalues(k);
    case ModeKind::ComponentNull:
      return 1.0 - rho;
    case ModeKind::Singleton:
      return 1.0;
  }
  return 1.0;
}

// Adds the prior precision of h to P and returns sum of log prior precisions.
double add_prior(const Problem& pb, const Hyper& hp, Eigen::MatrixXd& P) {
  double log_det = 0.0;
  for (int k = 0; k < pb.R; ++k) {
    if (pb.shared) {
      const double Dd = 1.0 / (hp.sigma[pb.dst] * hp.sigma[pb.dst] * mode_scale(pb, hp.rho[pb.dst], k));
      const double Ds = 1.0 / (hp.sigma[pb.src] * hp.sigma[pb.src] * mode_scale(pb, hp.rho[pb.src], k));
      const int id = pb.h_index(pb.dst, k), is = pb.h_index(pb.src, k);
      const double l = hp.lambda;
      P(id, id) += Dd;
      P(id, is) -= l * Dd;
      P(is, id) -= l * Dd;
      P(is, is) += l * l * Dd + Ds;
      log_det += std::log(Dd) + std::log(Ds);
    } else {
      for (int c = 0; c < pb.C; ++c) {
        const double D = 1.0 / (hp.sigma[c] * hp.sigma[c] * mode_scale(pb, hp.rho[c], k));
        P(pb.h_index(c, k), pb.h_index(c, k)) += D;
        log_det += std::log(D);
      }
    }
  }
  return log_det;
}

double log_hyper_prior(const Problem& pb, const Hyper& hp) {
  const double rate = pb.priors.pc_rate();
  double lp = 0.0;
  for (int c = 0; c < pb.C; ++c) {
    if (!pb.fixed_value("sigma." + idx(c))) lp += std::log(rate) - rate * hp.sigma[c] + std::log(hp.sigma[c]);
    if (pb.bym && !pb.fixed_value("rho." + idx(c)))
      lp += pb.priors.rho_a * std::log(hp.rho[c]) + pb.priors.rho_b * std::log1p(-hp.rho[c]);
    if (pb.unit && !pb.fixed_value("sigma_eps." + idx(c)))
      lp += std::log(rate) - rate * hp.sigma_eps[c] + std::log(hp.sigma_eps[c]);
  }
  const auto& lam = pb.priors.lambda;
  if (pb.shared && lam.kind == LambdaPrior::Kind::Gaussian) {
    const double z = (hp.lambda - lam.mean) / lam.sd;
    lp -= 0.5 * z * z;
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Data terms

void build_unit_block(const Problem& pb, int c, const Hyper& hp, DataBlock& full, std::vector<double>& yWy,
                      std::vector<double>& logdetW) {
  const int R = pb.R;
  const auto& st = pb.stats[static_cast<std::size_t>(c)];
  Eigen::VectorXd A = Eigen::VectorXd::Zero(R), B = Eigen::VectorXd::Zero(R);
  Eigen::VectorXd Y = Eigen::VectorXd::Zero(R), YZ = Eigen::VectorXd::Zero(R);
  double q = 0.0, ld = 0.0;
  const double se2 = hp.sigma_eps[c] * hp.sigma_eps[c];
  for (int k = 0; k < pb.K; ++k) {
    const int n = st.n[static_cast<std::size_t>(k)];
    if (n == 0) continue;
    const int r = pb.cl_region[static_cast<std::size_t>(k)];
    const double om = std::exp(2.0 * hp.log_omega(c, pb.omega_per_region ? r : 0));
    const double w = 1.0 / (se2 + om / n);
    const double y = st.ybar[static_cast<std::size_t>(k)];
    A(r) += w;
    Y(r) += w * y;
    if (pb.cl_rural[static_cast<std::size_t>(k)]) {
      B(r) += w;
      YZ(r) += w * y;
    }
    q += w * y * y;
    ld += std::log(w);
  }
  const auto& E = pb.icar->basis;
  const int fb = pb.beta_index(c), fg = pb.gamma_index(c), h0 = pb.h_index(c, 0);
  full.P(fb, fb) = A.sum();
  full.P(fb, fg) = full.P(fg, fb) = B.sum();
  full.P(fg, fg) = B.sum();
  const Eigen::RowVectorXd AE = A.transpose() * E, BE = B.transpose() * E;
  full.P.block(fb, h0, 1, R) = AE;
  full.P.block(h0, fb, R, 1) = AE.transpose();
  full.P.block(fg, h0, 1, R) = BE;
  full.P.block(h0, fg, R, 1) = BE.transpose();
  full.P.block(h0, h0, R, R).noalias() = E.transpose() * A.asDiagonal() * E;
  full.b(fb) = Y.sum();
  full.b(fg) = YZ.sum();
  full.b.segment(h0, R).noalias() = E.transpose() * Y;
  yWy[static_cast<std::size_t>(c)] = q;
  logdetW[static_cast<std::size_t>(c)] = ld;
  full.yWy = 0.0;
  full.logdetW = 0.0;
  for (int j = 0; j < pb.C; ++j) {
    full.yWy += yWy[static_cast<std::size_t>(j)];
    full.logdetW += logdetW[static_cast<std::size_t>(j)];
  }
}

// ---------------------------------------------------------------------------
// Chain

struct Evaluation {
  double log_target = kNegInf;
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd w;  // L^{-1} b
};

class Chain {
 public:
  Chain(const Problem& pb, const FitConfig& cfg, int chain_id)
      : pb_(pb), cfg_(cfg), rng_(derive_seed(cfg.seed, static_cast<std::uint64_t>(chain_id) + 1)) {}

  void run(Eigen::MatrixXd& out, int row0, ChainEnd& end, std::vector<double>& acceptance);

  static std::vector<std::string> column_names(const Problem& pb, const FitConfig& cfg);

 private:
  void initialize();
  void set_coord(Hyper& hp, int j, double value) const;
  double get_coord(const Hyper& hp, int j) const;
  void evaluate(const Hyper& hp, const DataBlock& data, Evaluation& ev) const;
  void refresh_data();
  void draw_latent();
  void update_lambda();
  void update_eps();
  void update_omega(bool adapting, int iter);
  void record(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row);
  [[noreturn]] void diverged(const std::string& where) const;

  const Problem& pb_;
  const FitConfig& cfg_;
  Rng rng_;

  Hyper hp_;
  std::vector<double> step_;
  std::vector<int> accepted_;
  Eigen::MatrixXd omega_step_;
  DataBlock data_;
  std::vector<double> yWy_c_, logdetW_c_;
  Evaluation cur_;
  bool stale_ = true;

  Eigen::VectorXd z_;       // current latent vector
  Eigen::MatrixXd shat_;    // R x C own effects s in eigen coordinates
  Eigen::MatrixXd eps_;     // K x C cluster effects
};

void Chain::diverged(const std::string& where) const {
  std::ostringstream msg;
  msg << "non-finite log density in " << where << "; state:";
  for (int c = 0; c < pb_.C; ++c) {
    msg << " sigma." << c + 1 << "=" << hp_.sigma[static_cast<std::size_t>(c)];
    if (pb_.bym) msg << " rho." << c + 1 << "=" << hp_.rho[static_cast<std::size_t>(c)];
    if (pb_.unit) msg << " sigma_eps." << c + 1 << "=" << hp_.sigma_eps[static_cast<std::size_t>(c)];
  }
  if (pb_.shared) msg << " lambda=" << hp_.lambda;
  if (pb_.unit)
    for (int c = 0; c < pb_.C; ++c) msg << " omega." << c + 1 << "=" << std::exp(hp_.log_omega(c, 0));
  throw NumericalError(msg.str());
}

double Chain::get_coord(const Hyper& hp, int j) const {
  const auto& cd = pb_.coords[static_cast<std::size_t>(j)];
  const auto c = static_cast<std::size_t>(cd.outcome);
  switch (cd.kind) {
    case CoordKind::LogSigma:
      return std::log(hp.sigma[c]);
    case CoordKind::LogitRho:
      return logit(hp.rho[c]);
    case CoordKind::LogSigmaEps:
      return std::log(hp.sigma_eps[c]);
    case CoordKind::Lambda:
      return hp.lambda;
  }
  return 0.0;
}

void Chain::set_coord(Hyper& hp, int j, double value) const {
  const auto& cd = pb_.coords[static_cast<std::size_t>(j)];
  const auto c = static_cast<std::size_t>(cd.outcome);
  switch (cd.kind) {
    case CoordKind::LogSigma:
      hp.sigma[c] = std::exp(value);
      break;
    case CoordKind::LogitRho:
      hp.rho[c] = inv_logit(value);
      break;
    case CoordKind::LogSigmaEps:
      hp.sigma_eps[c] = std::exp(value);
      break;
    case CoordKind::Lambda:
      hp.lambda = value;
      break;
  }
}

void Chain::initialize() {
  const int C = pb_.C;
  hp_.sigma.assign(static_cast<std::size_t>(C), 0.5);
  hp_.rho.assign(static_cast<std::size_t>(C), 0.5);
  hp_.sigma_eps.assign(static_cast<std::size_t>(C), 0.3);
  hp_.log_omega = Eigen::MatrixXd::Constant(C, pb_.omega_cols(), std::log(pb_.omega_init_scale));
  for (int c = 0; c < C; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    hp_.sigma[cc] = 0.2 + 0.6 * rng_.uniform();
    hp_.rho[cc] = 0.2 + 0.6 * rng_.uniform();
    hp_.sigma_eps[cc] = 0.1 + 0.4 * rng_.uniform();
    for (int j = 0; j < pb_.omega_cols(); ++j)
      hp_.log_omega(c, j) = std::log(pb_.omega_init_scale * (0.9 + 0.2 * rng_.uniform()));
  }
  hp_.lambda = pb_.shared ? -1.0 + 2.0 * rng_.uniform() : 0.0;

  step_.resize(pb_.coords.size());
  for (std::size_t j = 0; j < pb_.coords.size(); ++j)
    step_[j] = cfg_.initial_proposal_sd ? *cfg_.initial_proposal_sd : pb_.coords[j].step;
  omega_step_ = Eigen::MatrixXd::Constant(C, pb_.omega_cols(), cfg_.initial_proposal_sd ? *cfg_.initial_proposal_sd : 0.05);

  if (cfg_.warm_start) {
    const auto& ws = *cfg_.warm_start;
    if (ws.coords.size() != pb_.coords.size() || ws.step.size() != pb_.coords.size())
      throw ValidationError("warm start does not match the model's hyperparameters");
    for (std::size_t j = 0; j < pb_.coords.size(); ++j) {
      set_coord(hp_, static_cast<int>(j), ws.coords[j]);
      step_[j] = ws.step[j];
    }
    if (pb_.shared) hp_.lambda = ws.lambda;
    if (pb_.unit && ws.log_omega.size() == static_cast<std::size_t>(hp_.log_omega.size()))
      for (Eigen::Index i = 0; i < hp_.log_omega.size(); ++i) hp_.log_omega(i) = ws.log_omega[static_cast<std::size_t>(i)];
  }

  // Held hyperparameters override everything else.
  for (int c = 0; c < C; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    if (auto v = pb_.fixed_value("sigma." + idx(c))) hp_.sigma[cc] = *v;
    if (auto v = pb_.fixed_value("rho." + idx(c))) hp_.rho[cc] = *v;
    if (auto v = pb_.fixed_value("sigma_eps." + idx(c))) hp_.sigma_eps[cc] = *v;
    if (auto v = pb_.fixed_value("omega." + idx(c))) hp_.log_omega.row(c).setConstant(std::log(*v));
  }
  if (auto v = pb_.fixed_value("lambda")) hp_.lambda = *v;

  accepted_.assign(pb_.coords.size(), 0);
  yWy_c_.assign(static_cast<std::size_t>(C), 0.0);
  logdetW_c_.assign(static_cast<std::size_t>(C), 0.0);
  data_.P = Eigen::MatrixXd::Zero(pb_.p, pb_.p);
  data_.b = Eigen::VectorXd::Zero(pb_.p);
  if (!pb_.unit && !pb_.prior_only) data_ = pb_.area;
  shat_ = Eigen::MatrixXd::Zero(pb_.R, C);
  eps_ = Eigen::MatrixXd::Zero(pb_.K, C);
  z_ = Eigen::VectorXd::Zero(pb_.p);
}

void Chain::refresh_data() {
  if (!pb_.unit || pb_.prior_only) return;
  for (int c = 0; c < pb_.C; ++c) build_unit_block(pb_, c, hp_, data_, yWy_c_, logdetW_c_);
}

void Chain::evaluate(const Hyper& hp, const DataBlock& data, Evaluation& ev) const {
  Eigen::MatrixXd P = data.P;
  const double prior_logdet = add_prior(pb_, hp, P);
  ev.llt.compute(P);
  if (ev.llt.info() != Eigen::Success) {
    ev.log_target = kNegInf;
    return;
  }
  const auto& L = ev.llt.matrixL();
  double logdetP = 0.0;
  for (int i = 0; i < pb_.p; ++i) logdetP += std::log(ev.llt.matrixLLT()(i, i));
  logdetP *= 2.0;
  ev.w = L.solve(data.b);
  ev.log_target = 0.5 * data.logdetW - 0.5 * data.yWy + 0.5 * prior_logdet - 0.5 * logdetP +
                  0.5 * ev.w.squaredNorm() + log_hyper_prior(pb_, hp);
}

void Chain::draw_latent() {
  Eigen::VectorXd xi(pb_.p);
  for (int i = 0; i < pb_.p; ++i) xi(i) = rng_.normal();
  z_ = cur_.llt.matrixU().solve(cur_.w + xi);
  for (int c = 0; c < pb_.C; ++c) shat_.col(c) = z_.segment(pb_.h_index(c, 0), pb_.R);
  if (pb_.shared) shat_.col(pb_.dst) -= hp_.lambda * shat_.col(pb_.src);
}

void Chain::update_lambda() {
  if (!pb_.shared || pb_.fixed_value("lambda")) return;
  Eigen::VectorXd z0 = z_;
  z0.segment(pb_.h_index(pb_.dst, 0), pb_.R) = shat_.col(pb_.dst);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(pb_.p);
  d.segment(pb_.h_index(pb_.dst, 0), pb_.R) = shat_.col(pb_.src);
  LambdaConditional cond;
  if (pb_.prior_only) {
    // No data: the conditional is the prior.
    cond = lambda_full_conditional(Eigen::MatrixXd::Zero(pb_.p, pb_.p), Eigen::VectorXd::Zero(pb_.p), z0, d,
                                   pb_.priors.lambda);
  } else {
    cond = lambda_full_conditional(data_.P, data_.b, z0, d, pb_.priors.lambda);
  }
  if (cond.precision > 0.0) hp_.lambda = cond.mean + rng_.normal() / std::sqrt(cond.precision);
  z_ = z0 + hp_.lambda * d;
  stale_ = true;
}

void Chain::update_eps() {
  if (!pb_.unit) return;
  const auto& E = pb_.icar->basis;
  for (int c = 0; c < pb_.C; ++c) {
    const Eigen::VectorXd g = E * z_.segment(pb_.h_index(c, 0), pb_.R);
    const double beta = pb_.prior_only ? 0.0 : z_(pb_.beta_index(c));
    const double gamma = pb_.prior_only ? 0.0 : z_(pb_.gamma_index(c));
    const auto& st = pb_.stats[static_cast<std::size_t>(c)];
    const double prior_prec = 1.0 / (hp_.sigma_eps[static_cast<std::size_t>(c)] * hp_.sigma_eps[static_cast<std::size_t>(c)]);
    for (int k = 0; k < pb_.K; ++k) {
      const int r = pb_.cl_region[static_cast<std::size_t>(k)];
      const int n = pb_.prior_only ? 0 : st.n[static_cast<std::size_t>(k)];
      const double om2 = std::exp(2.0 * hp_.log_omega(c, pb_.omega_per_region ? r : 0));
      const double data_prec = n / om2;
      const double prec = data_prec + prior_prec;
      double mean = 0.0;
      if (n > 0) {
        const double mu = beta + (pb_.cl_rural[static_cast<std::size_t>(k)] ? gamma : 0.0) + g(r);
        mean = data_prec * (st.ybar[static_cast<std::size_t>(k)] - mu) / prec;
      }
      eps_(k, c) = mean + rng_.normal() / std::sqrt(prec);
    }
  }
}

void Chain::update_omega(bool adapting, int iter) {
  if (!pb_.unit || pb_.prior_only) return;
  const auto& E = pb_.icar->basis;
  const double rate = pb_.priors.pc_rate();
  for (int c = 0; c < pb_.C; ++c) {
    if (pb_.fixed_value("omega." + idx(c))) continue;
    const Eigen::VectorXd g = E * z_.segment(pb_.h_index(c, 0), pb_.R);
    const double beta = z_(pb_.beta_index(c)), gamma = z_(pb_.gamma_index(c));
    const auto& st = pb_.stats[static_cast<std::size_t>(c)];
    Eigen::VectorXd N = Eigen::VectorXd::Zero(pb_.omega_cols()), SS = Eigen::VectorXd::Zero(pb_.omega_cols());
    for (int k = 0; k < pb_.K; ++k) {
      const int n = st.n[static_cast<std::size_t>(k)];
      if (n == 0) continue;
      const int r = pb_.cl_region[static_cast<std::size_t>(k)];
      const int j = pb_.omega_per_region ? r : 0;
      const double mu = beta + (pb_.cl_rural[static_cast<std::size_t>(k)] ? gamma : 0.0) + g(r) + eps_(k, c);
      const double dev = st.ybar[static_cast<std::size_t>(k)] - mu;
      N(j) += n;
      SS(j) += st.ssw[static_cast<std::size_t>(k)] + n * dev * dev;
    }
    for (int j = 0; j < pb_.omega_cols(); ++j) {
      auto log_post = [&](double lw) {
        const double om = std::exp(lw);
        return -N(j) * lw - SS(j) / (2.0 * om * om) + std::log(rate) - rate * om + lw;
      };
      const double cur = hp_.log_omega(c, j);
      const double prop = cur + omega_step_(c, j) * rng_.normal();
      const double a = log_post(prop) - log_post(cur);
      if (std::isnan(a)) diverged("omega update");
      const bool accept = std::log(rng_.uniform()) < a;
      if (accept) hp_.log_omega(c, j) = prop;
      if (adapting) omega_step_(c, j) *= std::exp(((accept ? 1.0 : 0.0) - kTargetAcceptance) / std::pow(iter + 1.0, 0.6));
    }
  }
  stale_ = true;
}

std::vector<std::string> Chain::column_names(const Problem& pb, const FitConfig& cfg) {
  std::vector<std::string> cols;
  for (int c = 0; c < pb.C; ++c) cols.push_back("beta." + idx(c));
  if (pb.unit)
    for (int c = 0; c < pb.C; ++c) cols.push_back("gamma." + idx(c));
  for (int c = 0; c < pb.C; ++c) cols.push_back("sigma." + idx(c));
  if (pb.bym)
    for (int c = 0; c < pb.C; ++c) cols.push_back("rho." + idx(c));
  if (pb.shared) cols.push_back("lambda");
  if (pb.unit) {
    for (int c = 0; c < pb.C; ++c) cols.push_back("sigma_eps." + idx(c));
    for (int c = 0; c < pb.C; ++c) {
      if (pb.omega_per_region)
        for (int r = 0; r < pb.R; ++r) cols.push_back("omega." + idx(c) + "." + idx(r));
      else
        cols.push_back("omega." + idx(c));
    }
  }
  for (int c = 0; c < pb.C; ++c)
    for (int r = 0; r < pb.R; ++r) cols.push_back(mu_column(c, r));
  if (cfg.record_components) {
    for (int c = 0; c < pb.C; ++c)
      for (int r = 0; r < pb.R; ++r) cols.push_back("v_star." + idx(c) + "." + idx(r));
    if (pb.bym)
      for (int c = 0; c < pb.C; ++c)
        for (int r = 0; r < pb.R; ++r) cols.push_back("u_star." + idx(c) + "." + idx(r));
  }
  if (pb.unit && cfg.record_cluster_effects)
    for (int c = 0; c < pb.C; ++c)
      for (int k = 0; k < pb.K; ++k) cols.push_back("eps." + idx(c) + "." + idx(k));
  return cols;
}

void Chain::record(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  const int C = pb_.C, R = pb_.R;
  const auto& E = pb_.icar->basis;
  Eigen::Index j = 0;
  for (int c = 0; c < C; ++c) row(j++) = pb_.prior_only ? 0.0 : z_(pb_.beta_index(c));
  if (pb_.unit)
    for (int c = 0; c < C; ++c) row(j++) = pb_.prior_only ? 0.0 : z_(pb_.gamma_index(c));
  for (int c = 0; c < C; ++c) row(j++) = hp_.sigma[static_cast<std::size_t>(c)];
  if (pb_.bym)
    for (int c = 0; c < C; ++c) row(j++) = hp_.rho[static_cast<std::size_t>(c)];
  if (pb_.shared) row(j++) = hp_.lambda;
  if (pb_.unit) {
    for (int c = 0; c < C; ++c) row(j++) = hp_.sigma_eps[static_cast<std::size_t>(c)];
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < pb_.omega_cols(); ++i) row(j++) = std::exp(hp_.log_omega(c, i));
  }
  for (int c = 0; c < C; ++c) {
    const Eigen::VectorXd g = E * z_.segment(pb_.h_index(c, 0), R);
    double beta = 0.0, gamma = 0.0;
    if (!pb_.prior_only) {
      beta = z_(pb_.beta_index(c));
      if (pb_.unit) gamma = z_(pb_.gamma_index(c));
    }
    for (int r = 0; r < R; ++r) row(j++) = beta + (pb_.unit ? pb_.q(r) * gamma : 0.0) + g(r);
  }
  if (cfg_.record_components) {
    // Split each own effect s_c into standardized iid and ICAR parts.
    Eigen::MatrixXd vhat(R, C), uhat = Eigen::MatrixXd::Zero(R, C);
    for (int c = 0; c < C; ++c) {
      const double sigma = hp_.sigma[static_cast<std::size_t>(c)];
      const double rho = hp_.rho[static_cast<std::size_t>(c)];
      for (int k = 0; k < R; ++k) {
        const double s = shat_(k, c);
        if (!pb_.bym) {
          vhat(k, c) = s / sigma;
          continue;
        }
        switch (pb_.icar->kinds[static_cast<std::size_t>(k)]) {
          case ModeKind::Positive: {
            const double scale = mode_scale(pb_, rho, k);
            const double mean = std::sqrt(1.0 - rho) * s / (sigma * scale);
            const double var = rho / (pb_.icar->eigenvalues(k) * scale);
            vhat(k, c) = mean + std::sqrt(var) * rng_.normal();
            uhat(k, c) = (s / sigma - std::sqrt(1.0 - rho) * vhat(k, c)) / std::sqrt(rho);
            break;
          }
          case ModeKind::ComponentNull:
            vhat(k, c) = s / (sigma * std::sqrt(1.0 - rho));
            break;
          case ModeKind::Singleton:
            vhat(k, c) = s / sigma;
            break;
        }
      }
    }
    const Eigen::MatrixXd v = E * vhat;
    for (int c = 0; c < C; ++c)
      for (int r = 0; r < R; ++r) row(j++) = v(r, c);
    if (pb_.bym) {
      const Eigen::MatrixXd u = E * uhat;
      for (int c = 0; c < C; ++c)
        for (int r = 0; r < R; ++r) row(j++) = u(r, c);
    }
  }
  if (pb_.unit && cfg_.record_cluster_effects)
    for (int c = 0; c < C; ++c)
      for (int k = 0; k < pb_.K; ++k) row(j++) = eps_(k, c);
}

void Chain::run(Eigen::MatrixXd& out, int row0, ChainEnd& end, std::vector<double>& acceptance) {
  initialize();
  const int total = cfg_.warmup + cfg_.draws;
  const int J = static_cast<int>(pb_.coords.size());
  Evaluation prop;
  for (int it = 0; it < total; ++it) {
    const bool adapting = cfg_.adapt && it < cfg_.warmup;
    if (stale_ || it == 0) {
      refresh_data();
      evaluate(hp_, data_, cur_);
      if (!std::isfinite(cur_.log_target)) diverged("current state");
      stale_ = false;
    }
    for (int j = 0; j < J; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (step_[ju] == 0.0) continue;
      Hyper hp = hp_;
      set_coord(hp, j, get_coord(hp_, j) + step_[ju] * rng_.normal());
      const bool data_moves = pb_.coords[ju].kind == CoordKind::LogSigmaEps && !pb_.prior_only;
      if (data_moves) {
        DataBlock trial = data_;
        std::vector<double> yc = yWy_c_, lc = logdetW_c_;
        build_unit_block(pb_, pb_.coords[ju].outcome, hp, trial, yc, lc);
        evaluate(hp, trial, prop);
        if (std::isnan(prop.log_target)) diverged("proposal for " + pb_.coords[ju].name);
        const bool accept = std::log(rng_.uniform()) < prop.log_target - cur_.log_target;
        if (accept) {
          hp_ = hp;
          data_ = std::move(trial);
          yWy_c_ = yc;
          logdetW_c_ = lc;
          std::swap(cur_, prop);
        }
        if (it >= cfg_.warmup) accepted_[ju] += accept;
        if (adapting) step_[ju] *= std::exp(((accept ? 1.0 : 0.0) - kTargetAcceptance) / std::pow(it + 1.0, 0.6));
        continue;
      }
      evaluate(hp, data_, prop);
      if (std::isnan(prop.log_target)) diverged("proposal for " + pb_.coords[ju].name);
      const bool accept = std::log(rng_.uniform()) < prop.log_target - cur_.log_target;
      if (accept) {
        hp_ = hp;
        std::swap(cur_, prop);
      }
      if (it >= cfg_.warmup) accepted_[ju] += accept;
      if (adapting) step_[ju] *= std::exp(((accept ? 1.0 : 0.0) - kTargetAcceptance) / std::pow(it + 1.0, 0.6));
    }
    draw_latent();
    if (!z_.allFinite()) diverged("latent draw");
    update_lambda();
    update_eps();
    update_omega(adapting, it);
    if (it >= cfg_.warmup) record(out.row(row0 + it - cfg_.warmup));
  }

  end.coords.resize(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) end.coords[static_cast<std::size_t>(j)] = get_coord(hp_, j);
  end.step = step_;
  end.lambda = hp_.lambda;
  end.log_omega.assign(hp_.log_omega.data(), hp_.log_omega.data() + hp_.log_omega.size());
  acceptance.resize(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j)
    acceptance[static_cast<std::size_t>(j)] =
        cfg_.draws > 0 ? static_cast<double>(accepted_[static_cast<std::size_t>(j)]) / cfg_.draws : 0.0;
}

// ---------------------------------------------------------------------------
// Problem setup

void validate_fixed(const Problem& pb) {
  for (const auto& [name, value] : pb.fixed) {
    bool known = pb.shared && name == "lambda";
    for (int c = 0; c < pb.C && !known; ++c) {
      known = name == "sigma." + idx(c) || (pb.bym && name == "rho." + idx(c)) ||
              (pb.unit && (name == "sigma_eps." + idx(c) || name == "omega." + idx(c)));
    }
    if (!known) throw ValidationError("'" + name + "' is not a hyperparameter of this model");
    if (name.rfind("rho.", 0) == 0 ? !(value > 0.0 && value < 1.0) : (name != "lambda" && !(value > 0.0)))
      throw ValidationError("held value for '" + name + "' is outside its support");
  }
}

void add_coords(Problem& pb) {
  for (int c = 0; c < pb.C; ++c)
    if (!pb.fixed_value("sigma." + idx(c))) pb.coords.push_back({CoordKind::LogSigma, c, "sigma." + idx(c), 0.5});
  if (pb.bym)
    for (int c = 0; c < pb.C; ++c)
      if (!pb.fixed_value("rho." + idx(c))) pb.coords.push_back({CoordKind::LogitRho, c, "rho." + idx(c), 1.0});
  if (pb.unit)
    for (int c = 0; c < pb.C; ++c)
      if (!pb.fixed_value("sigma_eps." + idx(c)))
        pb.coords.push_back({CoordKind::LogSigmaEps, c, "sigma_eps." + idx(c), 0.3});
  // Collapsed random-walk move on lambda alongside its Gibbs update: the
  // Gibbs step alone is slow when the latent field pins the shared term.
  if (pb.shared && !pb.fixed_value("lambda")) pb.coords.push_back({CoordKind::Lambda, 0, "lambda", 0.3});
}

std::vector<std::string> island_notes(const IcarStructure& icar, const AdjacencyGraph& graph, bool bym) {
  std::vector<std::string> notes;
  if (!bym) return notes;
  for (std::size_t comp = 0; comp < icar.components.size(); ++comp)
    if (icar.singleton[comp])
      notes.push_back("region " + graph.label(icar.components[comp][0]) +
                      " is an island (no neighbours): its spatial share is carried by the iid part");
  return notes;
}

ModelFit run_chains(const Problem& pb, const ModelSpec& spec, const FitConfig& cfg) {
  if (cfg.chains < 1 || cfg.draws < 1 || cfg.warmup < 0)
    throw ValidationError("need at least one chain and one kept draw");
  ModelFit fit;
  fit.spec = spec;
  fit.chain_count = cfg.chains;
  fit.draws_per_chain = cfg.draws;
  fit.seed = cfg.seed;
  fit.regions = pb.R;
  fit.outcomes = pb.C;
  fit.columns = Chain::column_names(pb, cfg);
  fit.draws.resize(static_cast<Eigen::Index>(cfg.chains) * cfg.draws, static_cast<Eigen::Index>(fit.columns.size()));
  fit.chain_ends.resize(static_cast<std::size_t>(cfg.chains));
  std::vector<std::vector<double>> acceptance(static_cast<std::size_t>(cfg.chains));

  parallel_for(static_cast<std::size_t>(cfg.chains), cfg.threads, [&](std::size_t ch) {
    Chain chain(pb, cfg, static_cast<int>(ch));
    chain.run(fit.draws, static_cast<int>(ch) * cfg.draws, fit.chain_ends[ch], acceptance[ch]);
  });

  std::vector<std::string> diag_names;
  for (const auto& name : fit.columns) {
    if (name.rfind("v_star.", 0) == 0 || name.rfind("u_star.", 0) == 0 || name.rfind("eps.", 0) == 0) continue;
    if (pb.fixed.count(name)) continue;
    if (pb.prior_only && (name.rfind("beta.", 0) == 0 || name.rfind("gamma.", 0) == 0)) continue;
    diag_names.push_back(name);
  }
  fit.diagnostics = compute_diagnostics(fit, diag_names);
  for (std::size_t j = 0; j < pb.coords.size(); ++j) {
    double a = 0.0;
    for (const auto& acc : acceptance) a += acc[j];
    fit.diagnostics.acceptance.push_back(a / cfg.chains);
    fit.diagnostics.acceptance_names.push_back(pb.coords[j].name);
  }
  return fit;
}

}  // namespace

LambdaConditional lambda_full_conditional(const Eigen::MatrixXd& P_data, const Eigen::VectorXd& b,
                                          const Eigen::VectorXd& z0, const Eigen::VectorXd& d,
                                          const LambdaPrior& prior) {
  const Eigen::VectorXd Pd = P_data * d;
  double precision = d.dot(Pd);
  double linear = b.dot(d) - z0.dot(Pd);
  if (prior.kind == LambdaPrior::Kind::Gaussian) {
    precision += 1.0 / (prior.sd * prior.sd);
    linear += prior.mean / (prior.sd * prior.sd);
  }
  LambdaConditional out;
  out.precision = precision;
  out.mean = precision > 0.0 ? linear / precision : 0.0;
  return out;
}

ModelFit fit_area(const AreaModelSpec& spec, const DirectEstimateSet& est, const AdjacencyGraph& graph,
                  const FitConfig& cfg) {
  if (est.regions() != graph.size())
    throw ValidationError("direct estimates cover " + std::to_string(est.regions()) + " regions, graph has " +
                          std::to_string(graph.size()));
  spec.priors.validate();
  if (spec.family == AreaFamily::Direct) {
    // Draws from the Stage-1 sampling distribution; nothing to adapt.
    ModelFit fit;
    fit.spec = spec;
    fit.chain_count = cfg.chains;
    fit.draws_per_chain = cfg.draws;
    fit.seed = cfg.seed;
    fit.regions = est.regions();
    fit.outcomes = est.outcomes();
    for (int c = 0; c < est.outcomes(); ++c)
      for (int r = 0; r < est.regions(); ++r) fit.columns.push_back(mu_column(c, r));
    const Eigen::Index S = static_cast<Eigen::Index>(cfg.chains) * cfg.draws;
    fit.draws = Eigen::MatrixXd::Constant(S, static_cast<Eigen::Index>(fit.columns.size()),
                                          std::numeric_limits<double>::quiet_NaN());
    for (int ch = 0; ch < cfg.chains; ++ch) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(ch) + 1));
      for (int s = 0; s < cfg.draws; ++s) {
        for (int r = 0; r < est.regions(); ++r) {
          const auto have = est.available_outcomes(r);
          if (have.empty()) continue;
          const int m = static_cast<int>(have.size());
          Eigen::MatrixXd V(m, m);
          Eigen::VectorXd y(m);
          for (int a = 0; a < m; ++a) {
            y(a) = est.y_hat(r, have[static_cast<std::size_t>(a)]);
            for (int b = 0; b < m; ++b) V(a, b) = est.V_hat[static_cast<std::size_t>(r)](have[static_cast<std::size_t>(a)], have[static_cast<std::size_t>(b)]);
          }
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(V);
          Eigen::VectorXd xi(m);
          for (int a = 0; a < m; ++a) xi(a) = rng.normal();
          const Eigen::VectorXd x =
              y + eig.eigenvectors() * (eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * xi);
          for (int a = 0; a < m; ++a)
            fit.draws(ch * cfg.draws + s, have[static_cast<std::size_t>(a)] * est.regions() + r) = x(a);
        }
      }
    }
    fit.diagnostics.healthy = true;
    fit.diagnostics.max_rhat = std::numeric_limits<double>::quiet_NaN();
    for (int r = 0; r < est.regions(); ++r)
      if (!est.available.row(r).all())
        fit.notes.push_back("region " + graph.label(r) + " lacks a direct estimate for some outcome");
    return fit;
  }

  Problem pb;
  pb.unit = false;
  pb.shared = spec.shared();
  pb.bym = is_bym(spec.family);
  pb.prior_only = cfg.prior_only;
  pb.C = est.outcomes();
  pb.R = est.regions();
  if (pb.shared && pb.C != 2) throw ValidationError("shared models need exactly two outcomes");
  pb.src = spec.shared_source;
  pb.dst = 1 - spec.shared_source;
  pb.priors = spec.priors;
  pb.fixed = cfg.fixed;
  validate_fixed(pb);
  add_coords(pb);
  const IcarStructure icar = scaled_icar(graph);
  pb.icar = &icar;
  pb.nf = cfg.prior_only ? 0 : pb.C;

  std::vector<std::string> notes = island_notes(icar, graph, pb.bym);

  if (!cfg.prior_only) {
    const bool diagonal = spec.covariance_mode() == CovarianceMode::Diagonal;
    // Count augmented error dimensions.
    int nx = 0;
    std::vector<int> x_offset(static_cast<std::size_t>(pb.R), 0);
    std::vector<int> rows_per_outcome(static_cast<std::size_t>(pb.C), 0);
    std::vector<std::vector<int>> used(static_cast<std::size_t>(pb.R));
    std::vector<Eigen::MatrixXd> Vs(static_cast<std::size_t>(pb.R));
    for (int r = 0; r < pb.R; ++r) {
      const auto& V = est.V_hat[static_cast<std::size_t>(r)];
      for (int c : est.available_outcomes(r)) {
        if (!std::isfinite(V(c, c)) || !std::isfinite(est.y_hat(r, c))) continue;
        used[static_cast<std::size_t>(r)].push_back(c);
        ++rows_per_outcome[static_cast<std::size_t>(c)];
      }
      const auto& u = used[static_cast<std::size_t>(r)];
      const int m = static_cast<int>(u.size());
      Eigen::MatrixXd Vr(m, m);
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
          Vr(a, b) = diagonal && a != b ? 0.0 : V(u[static_cast<std::size_t>(a)], u[static_cast<std::size_t>(b)]);
      if (m > 0) {
        if (!Vr.allFinite()) throw ValidationError("region " + graph.label(r) + ": non-finite Stage-1 covariance");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Vr);
        const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
        if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
          throw ValidationError("region " + graph.label(r) +
                                ": Stage-1 covariance is not positive semidefinite; rerun direct estimation, "
                                "which projects it onto the PSD cone");
        for (int a = 0; a < m; ++a)
          if (Vr(a, a) < kVarianceFloor) {
            Vr(a, a) = kVarianceFloor;
            notes.push_back("region " + graph.label(r) + ": variance of outcome " +
                            idx(u[static_cast<std::size_t>(a)]) + " floored at 1e-10");
          }
      }
      Vs[static_cast<std::size_t>(r)] = Vr;
      x_offset[static_cast<std::size_t>(r)] = nx;
      if (cfg.augmented_likelihood) nx += m;
    }
    for (int c = 0; c < pb.C; ++c)
      if (rows_per_outcome[static_cast<std::size_t>(c)] == 0)
        throw ValidationError("outcome " + idx(c) + " has no direct estimate in any region; its intercept is not identified");

    pb.nx = nx;
    pb.p = pb.nf + pb.C * pb.R + pb.nx;
    Eigen::MatrixXd Pg = Eigen::MatrixXd::Zero(pb.p, pb.p);
    Eigen::VectorXd bg = Eigen::VectorXd::Zero(pb.p);
    double yWy = 0.0, logdetW = 0.0;
    double tau = 0.0;
    for (const auto& Vr : Vs)
      if (Vr.size() > 0) tau = std::max(tau, Vr.inverse().diagonal().maxCoeff());
    tau *= kAugmentedRelativePrecision;
    for (int r = 0; r < pb.R; ++r) {
      const auto& u = used[static_cast<std::size_t>(r)];
      const int m = static_cast<int>(u.size());
      if (m == 0) continue;
      Eigen::VectorXd y(m);
      for (int a = 0; a < m; ++a) y(a) = est.y_hat(r, u[static_cast<std::size_t>(a)]);
      Eigen::MatrixXd Vr = Vs[static_cast<std::size_t>(r)];
      Eigen::LLT<Eigen::MatrixXd> llt(Vr);
      if (llt.info() != Eigen::Success) {
        Vr.diagonal().array() += kVarianceFloor;
        llt.compute(Vr);
        if (llt.info() != Eigen::Success)
          throw NumericalError("region " + graph.label(r) + ": Stage-1 covariance cannot be factorized");
      }
      const Eigen::MatrixXd Wr = llt.solve(Eigen::MatrixXd::Identity(m, m));
      if (!cfg.augmented_likelihood) {
        for (int a = 0; a < m; ++a) {
          const int c = u[static_cast<std::size_t>(a)];
          for (int b = 0; b < m; ++b) {
            const int cb = u[static_cast<std::size_t>(b)];
            const double w = Wr(a, b);
            const int ia[2] = {pb.beta_index(c), pb.h_index(c, r)};
            const int ib[2] = {pb.beta_index(cb), pb.h_index(cb, r)};
            for (int i : ia)
              for (int j : ib) Pg(i, j) += w;
          }
          const double wy = Wr.row(a).dot(y);
          bg(pb.beta_index(c)) += wy;
          bg(pb.h_index(c, r)) += wy;
        }
        yWy += y.dot(Wr * y);
        for (int a = 0; a < m; ++a) logdetW -= 2.0 * std::log(llt.matrixLLT()(a, a));
      } else {
        // y_a = beta_a + g_{a,r} + x_{r,a} + tiny noise; x_r ~ N(0, V_r).
        const int x0 = pb.nf + pb.C * pb.R + x_offset[static_cast<std::size_t>(r)];
        for (int a = 0; a < m; ++a) {
          const int c = u[static_cast<std::size_t>(a)];
          const int ids[3] = {pb.beta_index(c), pb.h_index(c, r), x0 + a};
          for (int i : ids)
            for (int j : ids) Pg(i, j) += tau;
          for (int i : ids) bg(i) += tau * y(a);
          yWy += tau * y(a) * y(a);
        }
        Pg.block(x0, x0, m, m) += Wr;
      }
    }

    // Rotate the region-effect blocks into eigen-coordinates.
    const auto& E = icar.basis;
    Eigen::MatrixXd T = Eigen::MatrixXd::Identity(pb.p, pb.p);
    for (int c = 0; c < pb.C; ++c) T.block(pb.h_index(c, 0), pb.h_index(c, 0), pb.R, pb.R) = E;
    pb.area.P = T.transpose() * Pg * T;
    pb.area.P = 0.5 * (pb.area.P + pb.area.P.transpose()).eval();
    pb.area.b = T.transpose() * bg;
    pb.area.yWy = yWy;
    pb.area.logdetW = logdetW;
  } else {
    pb.p = pb.nf + pb.C * pb.R;
  }

  ModelFit fit = run_chains(pb, spec, cfg);
  fit.notes = std::move(notes);
  return fit;
}

ModelFit fit_unit(const UnitModelSpec& spec, const SurveyDataset& data, const AdjacencyGraph& graph,
                  const RuralFractions& q, const FitConfig& cfg) {
  if (data.region_count() != graph.size())
    throw ValidationError("survey covers " + std::to_string(data.region_count()) + " regions, graph has " +
                          std::to_string(graph.size()));
  q.validate(graph.size());
  spec.priors.validate();
  if (data.n_outcomes() != 2 && spec.shared()) throw ValidationError("shared models need exactly two outcomes");

  Problem pb;
  pb.unit = true;
  pb.shared = spec.shared();
  pb.bym = is_bym(spec.family);
  pb.prior_only = cfg.prior_only;
  pb.C = data.n_outcomes();
  pb.R = graph.size();
  pb.src = spec.shared_source;
  pb.dst = 1 - spec.shared_source;
  pb.priors = spec.priors;
  pb.fixed = cfg.fixed;
  pb.omega_per_region = spec.per_region_likelihood_variance;
  pb.q = Eigen::Map<const Eigen::VectorXd>(q.q.data(), static_cast<Eigen::Index>(q.q.size()));
  validate_fixed(pb);
  add_coords(pb);
  const IcarStructure icar = scaled_icar(graph);
  pb.icar = &icar;
  pb.nf = cfg.prior_only ? 0 : 2 * pb.C;
  pb.p = pb.nf + pb.C * pb.R;

  // Cluster summaries.
  const auto& recs = data.records();
  pb.K = static_cast<int>(data.cluster_index().size());
  pb.stats.assign(static_cast<std::size_t>(pb.C), ClusterStats{});
  for (auto& st : pb.stats) {
    st.n.assign(static_cast<std::size_t>(pb.K), 0);
    st.ybar.assign(static_cast<std::size_t>(pb.K), 0.0);
    st.ssw.assign(static_cast<std::size_t>(pb.K), 0.0);
  }
  double pooled_ss = 0.0, pooled_df = 0.0;
  int k = 0;
  for (const auto& [id, rows] : data.cluster_index()) {
    pb.cl_region.push_back(recs[rows.front()].region);
    pb.cl_rural.push_back(recs[rows.front()].rural);
    for (int c = 0; c < pb.C; ++c) {
      auto& st = pb.stats[static_cast<std::size_t>(c)];
      const auto kk = static_cast<std::size_t>(k);
      double sum = 0.0;
      int n = 0;
      for (std::size_t i : rows)
        if (recs[i].observed(c)) {
          sum += recs[i].outcomes[static_cast<std::size_t>(c)];
          ++n;
        }
      st.n[kk] = n;
      if (n == 0) continue;
      st.ybar[kk] = sum / n;
      double ss = 0.0;
      for (std::size_t i : rows)
        if (recs[i].observed(c)) {
          const double d = recs[i].outcomes[static_cast<std::size_t>(c)] - st.ybar[kk];
          ss += d * d;
        }
      st.ssw[kk] = ss;
      pooled_ss += ss;
      pooled_df += n - 1;
    }
    ++k;
  }
  pb.omega_init_scale = pooled_df > 0 ? std::sqrt(pooled_ss / pooled_df) : 1.0;

  if (!cfg.prior_only) {
    for (int c = 0; c < pb.C; ++c) {
      bool urban = false, rural = false;
      for (int j = 0; j < pb.K; ++j)
        if (pb.stats[static_cast<std::size_t>(c)].n[static_cast<std::size_t>(j)] > 0)
          (pb.cl_rural[static_cast<std::size_t>(j)] ? rural : urban) = true;
      if (!urban || !rural)
        throw ValidationError("outcome " + idx(c) +
                              " needs observations in both urban and rural clusters to identify the urban/rural effect");
    }
  }

  ModelFit fit = run_chains(pb, spec, cfg);
  fit.notes = island_notes(icar, graph, pb.bym);
  return fit;
}

}  // namespace msae

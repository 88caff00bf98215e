#include "reachmon/reachability.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "reachmon/stats.hpp"

namespace reachmon {

NoiseBound noise_energy_bound(const MatrixXd& sigma1, double p, std::uint64_t seed, std::size_t samples) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("noise_energy_bound: p must lie in (0, 1)");
  if (sigma1.rows() != sigma1.cols()) throw DimensionError("noise_energy_bound: sigma1 must be square");
  if (!is_positive_semidefinite(sigma1)) throw DomainError("noise_energy_bound: sigma1 is not PSD");
  const Eigen::Index n = sigma1.rows();
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sigma1);
  VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  const double top = lambda.maxCoeff();

  NoiseBound out;
  if (n == 0 || top <= 0.0) return out;
  if (lambda.minCoeff() >= top * (1.0 - 1e-12)) {
    out.value = top * stats::chi_squared_quantile(p, static_cast<double>(n));
    return out;
  }
  if (samples < 100) throw DomainError("noise_energy_bound: too few Monte Carlo samples");

  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> draws(samples);
  for (double& d : draws) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = normal(engine);
      s += lambda(i) * z * z;
    }
    d = s;
  }
  std::sort(draws.begin(), draws.end());
  const double count = static_cast<double>(samples);
  auto at = [&](double q) {
    const double idx = std::clamp(std::ceil(q * count) - 1.0, 0.0, count - 1.0);
    return draws[static_cast<std::size_t>(idx)];
  };
  out.value = at(p);
  // Order-statistic interval of +-1 binomial standard deviation around p.
  const double spread = std::sqrt(p * (1.0 - p) / count);
  out.std_error = 0.5 * (at(std::min(p + spread, 1.0)) - at(std::max(p - spread, 0.0)));
  out.monte_carlo = true;
  return out;
}

LmiData::LmiData(MatrixXd a, MatrixXd l, const MatrixXd& sigma, double tau_, double w_bar_, double b_)
    : A(std::move(a)), L(std::move(l)), tau(tau_), w_bar(w_bar_), b(b_) {
  require_square<double>(A, A.rows(), "LmiData A");
  require_shape<double>(L, A.rows(), L.cols(), "LmiData L");
  require_square<double>(sigma, L.cols(), "LmiData sigma");
  if (!(b > 0.0 && b < 1.0)) throw DomainError("LmiData: b must lie in (0, 1)");
  if (!(tau >= 0.0) || !(w_bar >= 0.0) || !(tau + w_bar > 0.0)) {
    throw DomainError("LmiData: need tau >= 0, w_bar >= 0 and tau + w_bar > 0");
  }
  if (!is_positive_definite(sigma)) throw DomainError("LmiData: sigma must be positive definite");
  sigma_sqrt = sqrtm_psd(sigma);
}

MatrixXd lmi_matrix(const LmiData& d, const MatrixXd& P) {
  const Eigen::Index n = d.n();
  const Eigen::Index m = d.m();
  require_square<double>(P, n, "lmi_matrix P");
  const double c = d.slack_weight();
  const MatrixXd pls = P * d.L * d.sigma_sqrt;
  MatrixXd q = MatrixXd::Zero(3 * n + m, 3 * n + m);
  q.block(0, 0, n, n) = d.b * P;
  q.block(0, n, n, n) = d.A.transpose() * P;
  q.block(n, 0, n, n) = P * d.A;
  q.block(n, n, n, n) = P;
  q.block(n, 2 * n, n, n) = P;
  q.block(2 * n, n, n, n) = P;
  q.block(n, 3 * n, n, m) = -pls;
  q.block(3 * n, n, m, n) = -pls.transpose();
  q.block(2 * n, 2 * n, n, n).diagonal().setConstant(c);
  q.block(3 * n, 3 * n, m, m).diagonal().setConstant(c);
  return q;
}

double lmi_min_eig_ratio(const LmiData& data, const MatrixXd& P) {
  const MatrixXd q = lmi_matrix(data, P);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(q, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  return top > 0.0 ? eig.eigenvalues().minCoeff() / top : 0.0;
}

namespace {

// Q(P) = Q0 + sum_t U_t^T P V_t with four (U, V) pairs of n x (3n+m)
// selectors: (sqrt(b) S1, sqrt(b) S1), (S2, S2), (S2, T), (T, S2), where
// T = A S1 + S3 - L S S4.
class BarrierProblem {
 public:
  explicit BarrierProblem(const LmiData& d) : data_(d), n_(d.n()) {
    const Eigen::Index m = d.m();
    const Eigen::Index order = 3 * n_ + m;
    MatrixXd s1 = MatrixXd::Zero(n_, order);
    MatrixXd s2 = MatrixXd::Zero(n_, order);
    MatrixXd t = MatrixXd::Zero(n_, order);
    s1.block(0, 0, n_, n_).setIdentity();
    s2.block(0, n_, n_, n_).setIdentity();
    t.block(0, 0, n_, n_) = d.A;
    t.block(0, 2 * n_, n_, n_).setIdentity();
    t.block(0, 3 * n_, n_, m) = -d.L * d.sigma_sqrt;
    const MatrixXd rb = std::sqrt(d.b) * s1;
    u_ = {rb, s2, s2, t};
    v_ = {rb, s2, t, s2};
    for (Eigen::Index a = 0; a < n_; ++a) {
      for (Eigen::Index b = a; b < n_; ++b) index_.emplace_back(a, b);
    }
  }

  Eigen::Index dim() const { return static_cast<Eigen::Index>(index_.size()); }

  MatrixXd q(const MatrixXd& P) const { return lmi_matrix(data_, P); }

  /// Barrier objective, +inf outside the interior.
  double value(const MatrixXd& P, double mu) const {
    const double lp = log_det_spd(P);
    if (!std::isfinite(lp)) return std::numeric_limits<double>::infinity();
    const double lq = log_det_spd(q(P));
    if (!std::isfinite(lq)) return std::numeric_limits<double>::infinity();
    return -lp - mu * lq;
  }

  MatrixXd from_coords(const VectorXd& x) const {
    MatrixXd d = MatrixXd::Zero(n_, n_);
    for (std::size_t i = 0; i < index_.size(); ++i) {
      const auto [a, b] = index_[i];
      d(a, b) = x(static_cast<Eigen::Index>(i));
      d(b, a) = x(static_cast<Eigen::Index>(i));
    }
    return d;
  }

  /// Newton direction in svec coordinates; returns false if the Hessian
  /// could not be factorized.
  bool newton(const MatrixXd& P, double mu, VectorXd& step, double& decrement2) const {
    const Eigen::LLT<MatrixXd> pf(P);
    const MatrixXd p_inv = pf.solve(MatrixXd::Identity(n_, n_));
    const MatrixXd qm = q(P);
    const Eigen::LLT<MatrixXd> qf(qm);
    if (qf.info() != Eigen::Success) return false;
    const MatrixXd w = qf.solve(MatrixXd::Identity(qm.rows(), qm.cols()));

    // M[s][t] = V_s W U_t^T
    std::array<MatrixXd, 4> vw;
    for (int s = 0; s < 4; ++s) vw[s] = v_[s] * w;
    std::array<std::array<MatrixXd, 4>, 4> mst;
    for (int s = 0; s < 4; ++s) {
      for (int t = 0; t < 4; ++t) mst[s][t] = vw[s] * u_[t].transpose();
    }

    MatrixXd grad = -p_inv;
    for (int t = 0; t < 4; ++t) grad -= mu * mst[t][t];
    grad = 0.5 * (grad + grad.transpose()).eval();

    const Eigen::Index dim = this->dim();
    VectorXd g(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const auto [a, b] = index_[static_cast<std::size_t>(i)];
      g(i) = a == b ? grad(a, a) : 2.0 * grad(a, b);
    }

    // H_ij = sum over pairs (X, Y) of weight * tr(X E_i Y E_j)
    //      = vec(E_j)^T (sum weight * Y^T kron X) vec(E_i).
    const Eigen::Index nn = n_ * n_;
    MatrixXd kron = MatrixXd::Zero(nn, nn);
    auto add = [&](const MatrixXd& x, const MatrixXd& y, double weight) {
      for (Eigen::Index j2 = 0; j2 < n_; ++j2) {
        for (Eigen::Index j1 = 0; j1 < n_; ++j1) {
          kron.block(j1 * n_, j2 * n_, n_, n_) += (weight * y(j2, j1)) * x;
        }
      }
    };
    add(p_inv, p_inv, 1.0);
    for (int s = 0; s < 4; ++s) {
      for (int t = 0; t < 4; ++t) add(mst[s][t], mst[t][s], mu);
    }
    MatrixXd h(dim, dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const auto [c, d] = index_[static_cast<std::size_t>(j)];
      const Eigen::Index q1 = c + d * n_, q2 = d + c * n_;
      for (Eigen::Index i = j; i < dim; ++i) {
        const auto [a, b] = index_[static_cast<std::size_t>(i)];
        const Eigen::Index p1 = a + b * n_, p2 = b + a * n_;
        double v = kron(p1, q1);
        if (c != d) v += kron(p1, q2);
        if (a != b) {
          v += kron(p2, q1);
          if (c != d) v += kron(p2, q2);
        }
        h(i, j) = v;
      }
    }
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose().triangularView<Eigen::StrictlyUpper>();

    const Eigen::LLT<MatrixXd> hf(h);
    if (hf.info() == Eigen::Success) {
      step = hf.solve(-g);
    } else {
      const Eigen::LDLT<MatrixXd> hl(h);
      if (hl.info() != Eigen::Success) return false;
      step = hl.solve(-g);
    }
    decrement2 = -g.dot(step);
    if (!std::isfinite(decrement2) || !step.allFinite()) return false;
    return true;
  }

 private:
  const LmiData& data_;
  Eigen::Index n_;
  std::array<MatrixXd, 4> u_, v_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> index_;
};

bool strictly_feasible(const LmiData& d, const MatrixXd& P) {
  const Eigen::LLT<MatrixXd> pf(P);
  if (pf.info() != Eigen::Success) return false;
  const Eigen::LLT<MatrixXd> qf(lmi_matrix(d, P));
  return qf.info() == Eigen::Success && pf.matrixLLT().diagonal().minCoeff() > 0.0;
}

// Best strictly feasible eta * base over a log grid, scored by the mu = 1
// barrier objective.
std::optional<MatrixXd> scan_multiples(const BarrierProblem& prob, const LmiData& d, const MatrixXd& base) {
  std::optional<MatrixXd> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (int k = -200; k <= 120; ++k) {  // eta in [1e-10, 1e6], 20 points per decade
    const double eta = std::pow(10.0, k / 20.0);
    const MatrixXd P = eta * base;
    if (!strictly_feasible(d, P)) continue;
    const double v = prob.value(P, 1.0);
    if (v < best_value) {
      best_value = v;
      best = P;
    }
  }
  return best;
}

}  // namespace

LmiResult solve_maxdet_lmi(const LmiData& data, const BarrierOptions& opts) {
  const Eigen::Index n = data.n();
  const BarrierProblem prob(data);

  std::optional<MatrixXd> start = scan_multiples(prob, data, MatrixXd::Identity(n, n));
  if (!start) {
    // eta I is only feasible when ||A||_2^2 < b; a scaled solution of
    // X - A^T X A / b = I covers every b > rho(A)^2.
    if (!(spectral_radius(data.A) * spectral_radius(data.A) < data.b)) {
      return InfeasibleMarker{"rho(A)^2 >= b: no invariant ellipsoid"};
    }
    MatrixXd x;
    try {
      x = solve_stein(MatrixXd(data.A.transpose() / std::sqrt(data.b)), MatrixXd::Identity(n, n));
    } catch (const DomainError&) {
      return InfeasibleMarker{"no strictly feasible starting point"};
    }
    start = scan_multiples(prob, data, x);
    if (!start) return InfeasibleMarker{"no strictly feasible starting point"};
  }

  MatrixXd P = *start;
  int steps = 0;
  for (double mu = opts.mu_start; mu >= opts.mu_stop; mu *= opts.mu_factor) {
    for (int it = 0; it < opts.max_newton_per_stage; ++it) {
      VectorXd x;
      double lambda2 = 0.0;
      if (!prob.newton(P, mu, x, lambda2)) break;
      if (lambda2 / 2.0 <= opts.newton_tol) break;
      const MatrixXd delta = prob.from_coords(x);
      const double f0 = prob.value(P, mu);
      const double slope = -lambda2;
      double t = 1.0;
      bool moved = false;
      while (t > 1e-14) {
        const MatrixXd trial = P + t * delta;
        const double f = prob.value(trial, mu);
        if (std::isfinite(f) && f <= f0 + 0.25 * t * slope) {
          P = 0.5 * (trial + trial.transpose());
          moved = true;
          break;
        }
        t *= 0.5;
      }
      ++steps;
      if (!moved) break;
    }
  }

  LmiSolution sol;
  sol.objective = -log_det_spd(P);
  sol.min_eig_ratio = lmi_min_eig_ratio(data, P);
  sol.newton_steps = steps;
  sol.P = std::move(P);
  if (!std::isfinite(sol.objective) || sol.min_eig_ratio < -1e-8) {
    return InfeasibleMarker{"barrier iterate left the feasible set"};
  }
  return sol;
}

ReachCertificate compute_certificate(const LtiModel& model, const EstimatorConfig& est,
                                     const DetectorConfig& det, const CertificateOptions& opts) {
  if (!(opts.delta_h > 0.0 && opts.delta_h < 1.0)) {
    throw DomainError("compute_certificate: delta_h must lie in (0, 1)");
  }
  est.validate(model);
  const double p = opts.p.value_or(1.0 - det.beta);
  NoiseBound wb;
  if (opts.w_bar) {
    if (!(*opts.w_bar >= 0.0)) throw DomainError("compute_certificate: w_bar must be >= 0");
    wb.value = *opts.w_bar;
  } else {
    wb = noise_energy_bound(model.sigma1(), p, opts.seed);
  }

  std::vector<GridPoint> grid;
  std::optional<LmiSolution> best;
  double best_b = 0.0;
  for (long j = 1;; ++j) {
    const double b = static_cast<double>(j) * opts.delta_h;
    if (b >= 1.0 - 1e-12) break;
    const LmiData data(model.A(), est.L, est.sigma_r, det.tau, wb.value, b);
    const LmiResult res = solve_maxdet_lmi(data, opts.barrier);
    GridPoint gp;
    gp.b = b;
    if (const auto* sol = std::get_if<LmiSolution>(&res)) {
      gp.feasible = true;
      gp.objective = sol->objective;
      if (!best || sol->objective < best->objective) {
        best = *sol;
        best_b = b;
      }
    } else {
      gp.note = std::get<InfeasibleMarker>(res).reason;
    }
    grid.push_back(std::move(gp));
  }

  if (!best) {
    std::vector<std::string> diag;
    for (const GridPoint& gp : grid) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "b=%.6g: ", gp.b);
      diag.push_back(buf + gp.note);
    }
    throw CertificateError("compute_certificate: no feasible grid point", std::move(diag));
  }

  MatrixXd pi = best->P.ldlt().solve(MatrixXd::Identity(model.n(), model.n()));
  pi = 0.5 * (pi + pi.transpose()).eval();
  ReachCertificate cert(ShapeMatrixd(std::move(pi)));
  cert.b_star = best_b;
  cert.p = p;
  cert.w_bar = wb.value;
  cert.w_bar_std_error = wb.std_error;
  cert.objective = best->objective;
  cert.beta = det.beta;
  cert.tau = det.tau;
  cert.L = est.L;
  cert.sigma_r = est.sigma_r;
  cert.grid = std::move(grid);
  return cert;
}

void verify_certificate(const ReachCertificate& cert, const MatrixXd& A, double tol) {
  if (!(cert.b_star > 0.0 && cert.b_star < 1.0)) throw CertificateError("certificate: b_star outside (0, 1)");
  const Eigen::Index n = cert.n();
  if (A.rows() != n || A.cols() != n || cert.L.rows() != n) {
    throw CertificateError("certificate: dimensions do not match the model");
  }
  try {
    const LmiData data(A, cert.L, cert.sigma_r, cert.tau, cert.w_bar, cert.b_star);
    const MatrixXd P = cert.Pi.matrix().ldlt().solve(MatrixXd::Identity(n, n));
    const double ratio = lmi_min_eig_ratio(data, 0.5 * (P + P.transpose()));
    if (ratio < -tol) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "certificate: LMI recheck failed (min/max eigenvalue %.3g)", ratio);
      throw CertificateError(buf);
    }
  } catch (const DomainError& e) {
    throw CertificateError(std::string("certificate: ") + e.what());
  }
}

Ellipsoidd instantiate_reach_set(const ReachCertificate& cert, const VectorXd& x_hat) {
  return Ellipsoidd(x_hat, cert.Pi);
}

}  // namespace reachmon

#pragma once

// Offline computation of the estimation-error reachable set under a stealthy
// attack: the max-det programme over an invariant ellipsoid, solved per grid
// value of b with an in-house log-det barrier interior-point method.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "reachmon/ellipsoid.hpp"
#include "reachmon/estimation.hpp"
#include "reachmon/model.hpp"

namespace reachmon {

struct NoiseBound {
  double value = 0.0;
  double std_error = 0.0;  // 0 for the closed-form cases
  bool monte_carlo = false;
};

/// p-quantile of ||w||^2 for w ~ N(0, sigma1). Closed form when sigma1 is a
/// multiple of the identity, otherwise a seeded Monte Carlo estimate over
/// `samples` draws of the weighted chi-square.
NoiseBound noise_energy_bound(const MatrixXd& sigma1, double p, std::uint64_t seed = 20190101,
                              std::size_t samples = 1'000'000);

/// Data of the LMI for one value of b.
struct LmiData {
  MatrixXd A;           // n x n
  MatrixXd L;           // n x m
  MatrixXd sigma_sqrt;  // m x m symmetric square root of the residual covariance
  double tau = 0.0;
  double w_bar = 0.0;
  double b = 0.5;

  LmiData(MatrixXd a, MatrixXd l, const MatrixXd& sigma, double tau, double w_bar, double b);
  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return L.cols(); }
  /// (1 - b) / (tau + w_bar)
  double slack_weight() const { return (1.0 - b) / (tau + w_bar); }
};

/// The (3n + m) x (3n + m) matrix
///   [ bP    A^T P   0     0          ]
///   [ P A   P       P    -P L S      ]
///   [ 0     P       cI    0          ]
///   [ 0    -S L^T P 0     cI         ]   with S = sigma^(1/2), c = (1-b)/(tau+w_bar).
MatrixXd lmi_matrix(const LmiData& data, const MatrixXd& P);

/// min eig(Q) / max eig(Q); the LMI holds to tolerance tol when this is >= -tol.
double lmi_min_eig_ratio(const LmiData& data, const MatrixXd& P);

struct LmiSolution {
  MatrixXd P;
  double objective = 0.0;  // -log det P
  int newton_steps = 0;
  double min_eig_ratio = 0.0;
};

struct InfeasibleMarker {
  std::string reason;
};

using LmiResult = std::variant<LmiSolution, InfeasibleMarker>;

struct BarrierOptions {
  double mu_start = 1.0;
  double mu_factor = 0.5;
  double mu_stop = 1e-9;
  int max_newton_per_stage = 100;
  double newton_tol = 1e-10;  // half squared Newton decrement
};

/// argmin -log det P subject to P > 0, Q(P) >= 0.
LmiResult solve_maxdet_lmi(const LmiData& data, const BarrierOptions& opts = {});

struct GridPoint {
  double b = 0.0;
  bool feasible = false;
  double objective = 0.0;
  std::string note;
};

struct ReachCertificate {
  explicit ReachCertificate(ShapeMatrixd pi) : Pi(std::move(pi)) {}

  ShapeMatrixd Pi;  // P^{-1}
  double b_star = 0.0;
  double p = 0.0;
  double w_bar = 0.0;
  double w_bar_std_error = 0.0;
  double objective = 0.0;
  double beta = 0.0;
  double tau = 0.0;
  MatrixXd L;
  MatrixXd sigma_r;
  std::vector<GridPoint> grid;
  std::string model_sha256;      // filled by the file layer
  std::string estimator_sha256;  // filled by the file layer

  Eigen::Index n() const { return Pi.dim(); }
};

struct CertificateOptions {
  double delta_h = 0.01;
  /// Confidence level of the noise bound; 1 - beta when unset.
  std::optional<double> p;
  /// Overrides the computed noise bound.
  std::optional<double> w_bar;
  std::uint64_t seed = 20190101;
  BarrierOptions barrier;
};

/// Grid search over b = delta_h, 2 delta_h, ... < 1 keeping the feasible
/// solution with the smallest -log det P. Throws CertificateError listing
/// every grid point when none is feasible.
ReachCertificate compute_certificate(const LtiModel& model, const EstimatorConfig& est,
                                     const DetectorConfig& det, const CertificateOptions& opts = {});

/// Re-checks Pi SPD and Q(Pi^{-1}, b_star) >= 0 to tolerance `tol`
/// (min eig >= -tol * max eig). Throws CertificateError on failure.
void verify_certificate(const ReachCertificate& cert, const MatrixXd& A, double tol = 1e-8);

/// Ellipsoid(x_hat, Pi). Shares the certificate's shape storage.
Ellipsoidd instantiate_reach_set(const ReachCertificate& cert, const VectorXd& x_hat);

}  // namespace reachmon

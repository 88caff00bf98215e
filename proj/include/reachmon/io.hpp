#pragma once

// File formats: JSON models, unsafe sets, scenarios and certificates; CSV
// and JSON-lines outputs. Floats are written with 17 significant digits.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reachmon/monitor.hpp"
#include "reachmon/plant.hpp"
#include "reachmon/reachability.hpp"

namespace reachmon::io {

using nlohmann::json;

std::string sha256_hex(const std::string& bytes);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// "%.17g"; non-finite values become "nan", "inf" or "-inf".
std::string format_double(double v);

MatrixXd matrix_from_json(const json& j, const std::string& what);
VectorXd vector_from_json(const json& j, const std::string& what);
json matrix_to_json(const MatrixXd& m);
json vector_to_json(const VectorXd& v);

struct LoadedModel {
  LtiModel model;
  std::string sha256;  // of the file bytes
};

LtiModel model_from_json(const json& j, const std::string& default_name = "model");
json model_to_json(const LtiModel& model);
LoadedModel load_model(const std::filesystem::path& path);

/// Unsafe-set JSON. Entries are either {name, normal, offset} or
/// the limit shorthand {name, output, type: "high"|"low", limit, nominal}.
/// With "space": "output" the normals are output-space rows and are mapped
/// through C; offsets are relative to the nominal operating point.
/// `outputs`, when given, receives the output index each entry refers to
/// (-1 for entries given by an explicit normal).
UnsafeSetd unsafe_set_from_json(const json& j, const LtiModel& model, std::vector<int>* outputs = nullptr);

Controller controller_from_json(const json& j, const LtiModel& model);
AttackPlan attack_from_json(const json& j, const LtiModel& model);
json attack_to_json(const AttackPlan& plan);

struct MonitorSettings {
  long K = 100;
  double beta = 0.05;
  std::optional<double> p;
  std::size_t rate_window = 100;
  double delta_h = 0.01;
  bool early_exit = true;
};

struct DetectionRule {
  int window = 50;
  double alpha = 1e-6;
};

struct AttackMix {
  double stealthy_fraction = 0.5;
  std::vector<long> start_range{0, 0};  // inclusive
  int sensor_count = 1;
  /// Candidate sensors for the random draw; all outputs when empty.
  std::vector<int> sensor_pool;
  AttackPlan stealthy;
  AttackPlan aggressive;
};

struct Scenario {
  explicit Scenario(LoadedModel m) : model(std::move(m)) {}

  LoadedModel model;
  std::filesystem::path path;
  std::filesystem::path model_path;
  Controller controller;
  AttackPlan attack;
  UnsafeSetd unsafe;
  std::vector<int> unsafe_outputs;
  MonitorSettings monitor;
  long horizon = 1000;
  std::optional<std::uint64_t> seed;
  VectorXd x0;
  DetectionRule detection;
  std::optional<AttackMix> mix;
  std::vector<long> k_list;
  std::size_t trials = 0;
};

Scenario load_scenario(const std::filesystem::path& path);

/// Certificate JSON with an integrity hash over its own content.
json certificate_to_json(const ReachCertificate& cert);
std::string save_certificate(const ReachCertificate& cert);

/// Parses, checks the self-hash and the model fingerprint (when given), then
/// re-verifies the LMI. Any failure throws CertificateError.
ReachCertificate certificate_from_json(const json& j, const LtiModel& model,
                                       const std::optional<std::string>& model_sha256);
ReachCertificate load_certificate(const std::filesystem::path& path, const LoadedModel& model);

/// Fingerprint of the estimator and detector data a certificate depends on.
std::string estimator_fingerprint(const MatrixXd& L, const MatrixXd& sigma_r, double tau, double beta);

void write_trace_csv(std::ostream& os, const SimTrace& trace);
/// Inverse of write_trace_csv; prefixed vector columns may be omitted.
SimTrace read_trace_csv(const std::string& text);
void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, long k, const MonitorVerdict& v);
json verdict_to_json(long k, const MonitorVerdict& v);

}  // namespace reachmon::io

#include "reachmon/io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>

namespace reachmon::io {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed: " + path.string());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(what + ": invalid JSON (" + e.what() + ")");
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw ValidationError(what + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ValidationError(what + ": unknown key '" + key + "'");
  }
}

const json& require(const json& j, const char* key, const std::string& what) {
  if (!j.contains(key)) throw ValidationError(what + ": missing '" + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ValidationError(what + ": expected a number");
  return j.get<double>();
}

long integer(const json& j, const std::string& what) {
  if (!j.is_number_integer()) throw ValidationError(what + ": expected an integer");
  return j.get<long>();
}

std::vector<int> int_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + ": expected an array");
  std::vector<int> out;
  for (const json& e : j) out.push_back(static_cast<int>(integer(e, what)));
  return out;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <typename T>
json nullable(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

fs::path resolve(const fs::path& base, const std::string& ref) {
  const fs::path p(ref);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array()) throw ValidationError(what + ": expected a row-major matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return MatrixXd(0, 0);
  if (!j[0].is_array()) throw ValidationError(what + ": expected an array of rows");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ValidationError(what + ": ragged matrix rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

VectorXd vector_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return VectorXd::Constant(1, j.get<double>());
  if (!j.is_array()) throw ValidationError(what + ": expected an array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], what);
  return v;
}

json matrix_to_json(const MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

LtiModel model_from_json(const json& j, const std::string& default_name) {
  check_keys(j, {"name", "description", "A", "B", "C", "Sigma1", "Sigma2", "dt"}, "model");
  try {
    return LtiModel(matrix_from_json(require(j, "A", "model"), "model.A"),
                    matrix_from_json(require(j, "B", "model"), "model.B"),
                    matrix_from_json(require(j, "C", "model"), "model.C"),
                    matrix_from_json(require(j, "Sigma1", "model"), "model.Sigma1"),
                    matrix_from_json(require(j, "Sigma2", "model"), "model.Sigma2"),
                    number(require(j, "dt", "model"), "model.dt"),
                    j.value("name", default_name));
  } catch (const DimensionError& e) {
    throw ValidationError(std::string("model: ") + e.what());
  } catch (const DomainError& e) {
    throw ValidationError(std::string("model: ") + e.what());
  }
}

json model_to_json(const LtiModel& model) {
  return json{{"name", model.name()},         {"A", matrix_to_json(model.A())},
              {"B", matrix_to_json(model.B())}, {"C", matrix_to_json(model.C())},
              {"Sigma1", matrix_to_json(model.sigma1())}, {"Sigma2", matrix_to_json(model.sigma2())},
              {"dt", model.dt()}};
}

LoadedModel load_model(const fs::path& path) {
  const std::string bytes = read_file(path);
  return LoadedModel{model_from_json(parse_json(bytes, path.string()), path.stem().string()), sha256_hex(bytes)};
}

UnsafeSetd unsafe_set_from_json(const json& j, const LtiModel& model, std::vector<int>* outputs) {
  const json* list = &j;
  bool output_space = false;
  if (j.is_object()) {
    check_keys(j, {"space", "constraints", "description"}, "unsafe_set");
    const std::string space = j.value("space", "state");
    if (space != "state" && space != "output") throw ValidationError("unsafe_set: space must be 'state' or 'output'");
    output_space = space == "output";
    list = &require(j, "constraints", "unsafe_set");
  }
  if (!list->is_array()) throw ValidationError("unsafe_set: constraints must be an array");
  const Eigen::Index width = output_space ? model.m() : model.n();

  std::vector<HalfSpaced> hs;
  std::vector<std::string> names;
  if (outputs) outputs->clear();
  for (std::size_t i = 0; i < list->size(); ++i) {
    const json& e = (*list)[i];
    const std::string what = "unsafe_set[" + std::to_string(i) + "]";
    check_keys(e, {"name", "normal", "offset", "output", "type", "limit", "nominal", "units"}, what);
    RowVectorXd normal;
    double offset = 0.0;
    int tag = -1;
    if (e.contains("normal")) {
      normal = vector_from_json(e.at("normal"), what + ".normal").transpose();
      offset = number(require(e, "offset", what), what + ".offset");
    } else {
      const long idx = integer(require(e, "output", what), what + ".output");
      if (idx < 0 || idx >= width) throw ValidationError(what + ": output index out of range");
      const std::string type = require(e, "type", what).get<std::string>();
      const double excess = number(require(e, "limit", what), what + ".limit") -
                            (e.contains("nominal") ? number(e.at("nominal"), what + ".nominal") : 0.0);
      normal = RowVectorXd::Zero(width);
      if (output_space) tag = static_cast<int>(idx);
      if (type == "high") {
        normal(idx) = 1.0;
        offset = excess;
      } else if (type == "low") {
        normal(idx) = -1.0;
        offset = -excess;
      } else {
        throw ValidationError(what + ": type must be 'high' or 'low'");
      }
    }
    if (normal.size() != width) throw ValidationError(what + ": normal has the wrong length");
    if (output_space) normal = normal * model.C();
    try {
      hs.emplace_back(normal, offset);
    } catch (const DomainError& err) {
      throw ValidationError(what + ": " + err.what());
    }
    names.push_back(e.value("name", "h" + std::to_string(i)));
    if (outputs) outputs->push_back(tag);
  }
  return UnsafeSetd(std::move(hs), std::move(names));
}

Controller controller_from_json(const json& j, const LtiModel& model) {
  check_keys(j, {"gain", "integral_gain", "reference"}, "controller");
  Controller c;
  c.gain = matrix_from_json(require(j, "gain", "controller"), "controller.gain");
  if (j.contains("integral_gain")) c.integral_gain = matrix_from_json(j.at("integral_gain"), "controller.integral_gain");
  c.dt = model.dt();
  const json& ref = j.contains("reference") ? j.at("reference") : json(nullptr);
  if (ref.is_null()) {
    c.reference = ReferenceSchedule(VectorXd::Zero(model.m()));
  } else if (ref.is_object()) {
    check_keys(ref, {"steps", "values"}, "controller.reference");
    std::vector<long> steps;
    for (const json& s : require(ref, "steps", "controller.reference")) steps.push_back(integer(s, "reference.steps"));
    std::vector<VectorXd> values;
    for (const json& v : require(ref, "values", "controller.reference")) values.push_back(vector_from_json(v, "reference.values"));
    c.reference = ReferenceSchedule(std::move(steps), std::move(values));
  } else {
    c.reference = ReferenceSchedule(vector_from_json(ref, "controller.reference"));
  }
  try {
    c.validate(model);
  } catch (const DimensionError& e) {
    throw ValidationError(std::string("controller: ") + e.what());
  }
  return c;
}

AttackPlan attack_from_json(const json& j, const LtiModel& model) {
  AttackPlan a;
  if (j.is_null()) return a;
  check_keys(j,
             {"start", "end", "sensors", "strategy", "rate", "direction", "alarm_mimic_rate", "stealthy",
              "epsilon", "alarm_scale"},
             "attack");
  a.start = j.contains("start") ? integer(j.at("start"), "attack.start") : 0;
  a.end = j.contains("end") ? integer(j.at("end"), "attack.end") : -1;
  if (j.contains("sensors")) a.sensors = int_list(j.at("sensors"), "attack.sensors");
  const std::string strategy = j.value("strategy", "residual_steering");
  if (strategy == "growing_bias") {
    a.strategy = AttackStrategy::GrowingBias;
  } else if (strategy == "residual_steering") {
    a.strategy = AttackStrategy::ResidualSteering;
  } else {
    throw ValidationError("attack.strategy must be 'growing_bias' or 'residual_steering'");
  }
  if (j.contains("rate")) a.rate = number(j.at("rate"), "attack.rate");
  if (j.contains("direction")) a.direction = vector_from_json(j.at("direction"), "attack.direction");
  if (j.contains("alarm_mimic_rate")) a.alarm_mimic_rate = number(j.at("alarm_mimic_rate"), "attack.alarm_mimic_rate");
  if (j.contains("stealthy")) a.stealthy = j.at("stealthy").get<bool>();
  if (j.contains("epsilon")) a.epsilon = number(j.at("epsilon"), "attack.epsilon");
  if (j.contains("alarm_scale")) a.alarm_scale = number(j.at("alarm_scale"), "attack.alarm_scale");
  try {
    a.validate(model.m());
  } catch (const DimensionError& e) {
    throw ValidationError(std::string("attack: ") + e.what());
  }
  return a;
}

json attack_to_json(const AttackPlan& a) {
  json j{{"start", a.start},
         {"end", a.end},
         {"sensors", a.sensors},
         {"strategy", a.strategy == AttackStrategy::GrowingBias ? "growing_bias" : "residual_steering"},
         {"rate", a.rate},
         {"alarm_mimic_rate", a.alarm_mimic_rate},
         {"stealthy", a.stealthy},
         {"epsilon", a.epsilon},
         {"alarm_scale", a.alarm_scale}};
  if (a.direction.size()) j["direction"] = vector_to_json(a.direction);
  return j;
}

Scenario load_scenario(const fs::path& path) {
  const json j = parse_json(read_file(path), path.string());
  check_keys(j, {"description", "model_ref", "controller", "attack", "unsafe_set", "monitor", "run", "detection", "evaluation"},
             "scenario");
  const fs::path base = path.parent_path();
  const fs::path model_path = resolve(base, require(j, "model_ref", "scenario").get<std::string>());
  Scenario s(load_model(model_path));
  s.path = path;
  s.model_path = model_path;
  const LtiModel& model = s.model.model;

  s.controller = controller_from_json(require(j, "controller", "scenario"), model);
  s.attack = attack_from_json(j.value("attack", json(nullptr)), model);

  if (j.contains("unsafe_set")) {
    const json& u = j.at("unsafe_set");
    if (u.is_object() && u.contains("file")) {
      check_keys(u, {"file"}, "unsafe_set");
      const fs::path up = resolve(base, u.at("file").get<std::string>());
      s.unsafe = unsafe_set_from_json(parse_json(read_file(up), up.string()), model, &s.unsafe_outputs);
    } else {
      s.unsafe = unsafe_set_from_json(u, model, &s.unsafe_outputs);
    }
  }

  if (j.contains("monitor")) {
    const json& m = j.at("monitor");
    check_keys(m, {"K", "beta", "p", "rate_window", "delta_h", "early_exit"}, "monitor");
    if (m.contains("K")) s.monitor.K = integer(m.at("K"), "monitor.K");
    if (m.contains("beta")) s.monitor.beta = number(m.at("beta"), "monitor.beta");
    if (m.contains("p")) s.monitor.p = number(m.at("p"), "monitor.p");
    if (m.contains("rate_window")) s.monitor.rate_window = static_cast<std::size_t>(integer(m.at("rate_window"), "monitor.rate_window"));
    if (m.contains("delta_h")) s.monitor.delta_h = number(m.at("delta_h"), "monitor.delta_h");
    if (m.contains("early_exit")) s.monitor.early_exit = m.at("early_exit").get<bool>();
    if (s.monitor.K < 0) throw ValidationError("monitor.K must be >= 0");
    if (!(s.monitor.beta > 0.0 && s.monitor.beta < 1.0)) throw ValidationError("monitor.beta must lie in (0, 1)");
  }

  if (j.contains("run")) {
    const json& r = j.at("run");
    check_keys(r, {"horizon", "seed", "x0"}, "run");
    if (r.contains("horizon")) s.horizon = integer(r.at("horizon"), "run.horizon");
    if (r.contains("seed")) s.seed = r.at("seed").get<std::uint64_t>();
    if (r.contains("x0")) s.x0 = vector_from_json(r.at("x0"), "run.x0");
    if (s.horizon < 0) throw ValidationError("run.horizon must be >= 0");
    if (s.x0.size() && s.x0.size() != model.n()) throw ValidationError("run.x0 must have length n");
  }

  if (j.contains("detection")) {
    const json& d = j.at("detection");
    check_keys(d, {"window", "alpha"}, "detection");
    if (d.contains("window")) s.detection.window = static_cast<int>(integer(d.at("window"), "detection.window"));
    if (d.contains("alpha")) s.detection.alpha = number(d.at("alpha"), "detection.alpha");
    if (s.detection.window < 1 || !(s.detection.alpha > 0.0 && s.detection.alpha < 1.0)) {
      throw ValidationError("detection: need window >= 1 and alpha in (0, 1)");
    }
  }

  if (j.contains("evaluation")) {
    const json& e = j.at("evaluation");
    check_keys(e, {"k_list", "trials", "stealthy_fraction", "start_range", "sensor_count", "sensor_pool", "stealthy", "aggressive"},
               "evaluation");
    AttackMix mix;
    if (e.contains("k_list")) {
      for (const json& k : e.at("k_list")) s.k_list.push_back(integer(k, "evaluation.k_list"));
    }
    if (e.contains("trials")) s.trials = static_cast<std::size_t>(integer(e.at("trials"), "evaluation.trials"));
    if (e.contains("stealthy_fraction")) mix.stealthy_fraction = number(e.at("stealthy_fraction"), "evaluation.stealthy_fraction");
    if (e.contains("start_range")) {
      const json& r = e.at("start_range");
      if (!r.is_array() || r.size() != 2) throw ValidationError("evaluation.start_range must be [lo, hi]");
      mix.start_range = {integer(r[0], "start_range"), integer(r[1], "start_range")};
      if (mix.start_range[0] < 0 || mix.start_range[1] < mix.start_range[0]) {
        throw ValidationError("evaluation.start_range must satisfy 0 <= lo <= hi");
      }
    }
    if (e.contains("sensor_count")) mix.sensor_count = static_cast<int>(integer(e.at("sensor_count"), "evaluation.sensor_count"));
    if (e.contains("sensor_pool")) mix.sensor_pool = int_list(e.at("sensor_pool"), "evaluation.sensor_pool");
    for (int sensor : mix.sensor_pool) {
      if (sensor < 0 || sensor >= model.m()) throw ValidationError("evaluation.sensor_pool: index out of range");
    }
    if (e.contains("stealthy")) mix.stealthy = attack_from_json(e.at("stealthy"), model);
    if (e.contains("aggressive")) mix.aggressive = attack_from_json(e.at("aggressive"), model);
    if (!(mix.stealthy_fraction >= 0.0 && mix.stealthy_fraction <= 1.0)) {
      throw ValidationError("evaluation.stealthy_fraction must lie in [0, 1]");
    }
    s.mix = std::move(mix);
  }
  return s;
}

std::string estimator_fingerprint(const MatrixXd& L, const MatrixXd& sigma_r, double tau, double beta) {
  std::ostringstream os;
  auto put = [&](const MatrixXd& m) {
    os << m.rows() << 'x' << m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) os << ' ' << format_double(m(r, c));
    }
    os << '\n';
  };
  put(L);
  put(sigma_r);
  os << format_double(tau) << ' ' << format_double(beta) << '\n';
  return sha256_hex(os.str());
}

json certificate_to_json(const ReachCertificate& cert) {
  json grid = json::array();
  for (const GridPoint& g : cert.grid) {
    grid.push_back({{"b", g.b}, {"feasible", g.feasible}, {"objective", nullable(g.feasible ? g.objective : NAN)}, {"note", g.note}});
  }
  json j{{"format", "reachmon-certificate/1"},
         {"Pi", matrix_to_json(cert.Pi.matrix())},
         {"b_star", cert.b_star},
         {"p", cert.p},
         {"w_bar", cert.w_bar},
         {"w_bar_std_error", cert.w_bar_std_error},
         {"objective", cert.objective},
         {"beta", cert.beta},
         {"tau", cert.tau},
         {"estimator", {{"L", matrix_to_json(cert.L)}, {"Sigma", matrix_to_json(cert.sigma_r)}}},
         {"model_sha256", cert.model_sha256},
         {"estimator_sha256", estimator_fingerprint(cert.L, cert.sigma_r, cert.tau, cert.beta)},
         {"grid", grid}};
  j["integrity_sha256"] = sha256_hex(j.dump());
  return j;
}

std::string save_certificate(const ReachCertificate& cert) { return certificate_to_json(cert).dump(2) + "\n"; }

ReachCertificate certificate_from_json(const json& j, const LtiModel& model,
                                       const std::optional<std::string>& model_sha256) {
  try {
    if (!j.is_object() || j.value("format", "") != "reachmon-certificate/1") {
      throw CertificateError("certificate: unrecognised format");
    }
    json body = j;
    const std::string stored = body.value("integrity_sha256", "");
    body.erase("integrity_sha256");
    if (stored != sha256_hex(body.dump())) throw CertificateError("certificate: integrity hash mismatch");

    MatrixXd pi = matrix_from_json(j.at("Pi"), "certificate.Pi");
    if (pi.rows() != model.n() || pi.cols() != model.n()) {
      throw CertificateError("certificate: Pi order does not match the model");
    }
    ReachCertificate cert{ShapeMatrixd(std::move(pi))};
    cert.b_star = j.at("b_star").get<double>();
    cert.p = j.at("p").get<double>();
    cert.w_bar = j.at("w_bar").get<double>();
    cert.w_bar_std_error = j.value("w_bar_std_error", 0.0);
    cert.objective = j.at("objective").get<double>();
    cert.beta = j.at("beta").get<double>();
    cert.tau = j.at("tau").get<double>();
    cert.L = matrix_from_json(j.at("estimator").at("L"), "certificate.estimator.L");
    cert.sigma_r = matrix_from_json(j.at("estimator").at("Sigma"), "certificate.estimator.Sigma");
    cert.model_sha256 = j.at("model_sha256").get<std::string>();
    cert.estimator_sha256 = j.at("estimator_sha256").get<std::string>();
    for (const json& g : j.value("grid", json::array())) {
      GridPoint gp;
      gp.b = g.at("b").get<double>();
      gp.feasible = g.at("feasible").get<bool>();
      gp.objective = g.at("objective").is_number() ? g.at("objective").get<double>() : 0.0;
      gp.note = g.value("note", "");
      cert.grid.push_back(std::move(gp));
    }

    if (cert.estimator_sha256 != estimator_fingerprint(cert.L, cert.sigma_r, cert.tau, cert.beta)) {
      throw CertificateError("certificate: estimator fingerprint mismatch");
    }
    if (model_sha256 && *model_sha256 != cert.model_sha256) {
      throw CertificateError("certificate: model fingerprint mismatch (certificate was computed for another model)");
    }
    verify_certificate(cert, model.A());
    return cert;
  } catch (const CertificateError&) {
    throw;
  } catch (const std::exception& e) {
    throw CertificateError(std::string("certificate: malformed (") + e.what() + ")");
  }
}

ReachCertificate load_certificate(const fs::path& path, const LoadedModel& model) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CertificateError("certificate: invalid JSON (" + std::string(e.what()) + ")");
  }
  return certificate_from_json(j, model.model, model.sha256);
}

void write_trace_csv(std::ostream& os, const SimTrace& trace) {
  if (trace.records.empty()) return;
  const StepRecord& r0 = trace.records.front();
  os << "k";
  auto head = [&](const char* prefix, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << prefix << i;
  };
  head("x_", r0.x.size());
  head("u_", r0.u.size());
  head("y_", r0.y.size());
  head("ybar_", r0.y_bar.size());
  head("delta_", r0.delta.size());
  head("xhat_", r0.x_hat.size());
  os << ",z,alarm\n";
  auto put = [&](const VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_double(v(i));
  };
  for (const StepRecord& r : trace.records) {
    os << r.k;
    put(r.x);
    put(r.u);
    put(r.y);
    put(r.y_bar);
    put(r.delta);
    put(r.x_hat);
    os << ',' << format_double(r.z) << ',' << (r.alarm ? 1 : 0) << '\n';
  }
}

void write_metrics_header(std::ostream& os) { os << "k,safe,k_f,tc_seconds,impact,d_u,t_u,min_distance\n"; }

void write_metrics_row(std::ostream& os, long k, const MonitorVerdict& v) {
  double min_d = std::numeric_limits<double>::infinity();
  for (double d : v.per_step_min_distance) min_d = std::min(min_d, d);
  os << k << ',' << (v.safe ? 1 : 0) << ',';
  if (v.k_f) os << *v.k_f;
  os << ',';
  if (v.tc_seconds) os << format_double(*v.tc_seconds);
  os << ',' << format_double(v.impact) << ',' << format_double(v.baseline_du) << ',';
  if (v.baseline_tu) os << format_double(*v.baseline_tu);
  os << ',' << format_double(min_d) << '\n';
}

json verdict_to_json(long k, const MonitorVerdict& v) {
  json dist = json::array();
  for (double d : v.per_step_min_distance) dist.push_back(nullable(d));
  return json{{"k", k},
              {"safe", v.safe},
              {"center_unsafe", v.center_unsafe},
              {"k_f", nullable(v.k_f)},
              {"violated_constraint", nullable(v.violated_constraint)},
              {"tc_seconds", nullable(v.tc_seconds)},
              {"impact", v.impact},
              {"per_step_min_distance", dist},
              {"baseline_du", nullable(v.baseline_du)},
              {"baseline_tu", nullable(v.baseline_tu ? *v.baseline_tu : NAN)}};
}

SimTrace read_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trace: empty file");
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  const std::vector<std::string> header = split(line);
  if (header.empty() || header[0] != "k") throw ValidationError("trace: first column must be k");

  // Column index lists per vector prefix, in component order.
  const char* prefixes[] = {"x_", "u_", "y_", "ybar_", "delta_", "xhat_"};
  std::vector<std::vector<std::size_t>> cols(std::size(prefixes));
  std::optional<std::size_t> z_col, alarm_col;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "z") {
      z_col = c;
      continue;
    }
    if (h == "alarm") {
      alarm_col = c;
      continue;
    }
    bool known = false;
    for (std::size_t p = 0; p < std::size(prefixes); ++p) {
      const std::string pre = prefixes[p];
      if (h.size() > pre.size() && h.compare(0, pre.size(), pre) == 0 &&
          h.find_first_not_of("0123456789", pre.size()) == std::string::npos) {
        if (std::stoul(h.substr(pre.size())) != cols[p].size()) throw ValidationError("trace: column " + h + " out of order");
        cols[p].push_back(c);
        known = true;
      }
    }
    if (!known) throw ValidationError("trace: unknown column " + h);
  }

  SimTrace trace;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) throw ValidationError("trace: row " + std::to_string(row) + " has the wrong width");
    auto value = [&](std::size_t c) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument(cells[c]);
        return v;
      } catch (const std::exception&) {
        throw ValidationError("trace: bad number '" + cells[c] + "' in row " + std::to_string(row));
      }
    };
    StepRecord r;
    r.k = static_cast<long>(value(0));
    VectorXd* targets[] = {&r.x, &r.u, &r.y, &r.y_bar, &r.delta, &r.x_hat};
    for (std::size_t p = 0; p < std::size(prefixes); ++p) {
      targets[p]->resize(static_cast<Eigen::Index>(cols[p].size()));
      for (std::size_t i = 0; i < cols[p].size(); ++i) (*targets[p])(static_cast<Eigen::Index>(i)) = value(cols[p][i]);
    }
    if (z_col) r.z = value(*z_col);
    if (alarm_col) r.alarm = value(*alarm_col) != 0.0;
    trace.records.push_back(std::move(r));
  }
  return trace;
}

}  // namespace reachmon::io

#pragma once

// File formats: problem JSON, dataset JSONL, token-count files, report JSON,
// trace CSV and run manifests.

#include <chrono>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nce/asymptotics.hpp"
#include "nce/error.hpp"
#include "nce/model.hpp"
#include "nce/optimize.hpp"
#include "nce/sampling.hpp"

namespace nce {

using Json = nlohmann::json;

inline constexpr const char* kArtifactVersion = "0.1.0";

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << contents;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

inline uint64_t file_hash(const std::string& path) { return fnv1a(read_file(path)); }

namespace detail {

inline Json to_json_array(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline const Json& field(const Json& j, const char* name) {
  if (!j.contains(name)) throw ConfigError(std::string(name) + ": missing");
  return j.at(name);
}

inline int int_field(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_number_integer()) throw ConfigError(std::string(name) + ": expected an integer");
  return v.get<int>();
}

inline std::vector<double> number_array(const Json& j, const char* name, size_t expected) {
  const Json& v = field(j, name);
  if (!v.is_array()) throw ConfigError(std::string(name) + ": expected an array");
  if (v.size() != expected) {
    std::ostringstream os;
    os << name << ": expected " << expected << " entries, got " << v.size();
    throw ConfigError(os.str());
  }
  std::vector<double> out;
  out.reserve(expected);
  for (size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(std::string(name) + ": entry " + std::to_string(i) + " is not a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Problem JSON

inline Json problem_to_json(const ConditionalProblem& p) {
  Json j;
  j["m_x"] = p.m_x();
  j["m_y"] = p.m_y();
  j["variant"] = p.model.variant_name();
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LinearFeatures>) {
          j["d"] = v.d;
          j["features"] = v.table;
        } else if constexpr (std::is_same_v<T, LinearSoftmax>) {
          j["d"] = v.inputs.feature_dim;
          j["features"] = v.inputs.features;
        } else {
          j["d"] = v.dim;
          j["embedding_dim"] = v.dim;
          j["context_len"] = v.context_len;
          j["histories"] = v.histories;
        }
      },
      p.model.inner());
  if (p.truth) {
    j["theta_star"] = detail::to_json_array(p.truth->theta);
    if (p.truth->gamma) j["gamma_star"] = *p.truth->gamma;
  }
  j["p_x"] = detail::to_json_array(p.p_x);
  Json rows = Json::array();
  for (Input x = 0; x < p.m_x(); ++x)
    for (Label y = 0; y < p.m_y(); ++y) rows.push_back(p.p_y_given_x(x, y));
  j["p_y_given_x"] = rows;
  return j;
}

inline ConditionalProblem problem_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("problem: expected a JSON object");
  const int m_x = detail::int_field(j, "m_x");
  const int m_y = detail::int_field(j, "m_y");
  const int d = detail::int_field(j, "d");
  if (m_x < 1) throw ConfigError("m_x: must be >= 1");
  if (m_y < 2) throw ConfigError("m_y: must be >= 2, got " + std::to_string(m_y));
  if (d < 1) throw ConfigError("d: must be >= 1");
  const Json& variant_j = detail::field(j, "variant");
  if (!variant_j.is_string()) throw ConfigError("variant: expected a string");
  std::string variant = variant_j.get<std::string>();
  bool bias = false;
  if (variant.rfind("context_bias:", 0) == 0) {
    bias = true;
    variant = variant.substr(13);
  }
  ConditionalProblem p;
  p.labels = LabelSpace(m_y);
  ScoringFunction sf;
  if (variant == "linear_features") {
    sf = ScoringFunction::linear_features(
        m_x, m_y, d, detail::number_array(j, "features", static_cast<size_t>(m_x) * m_y * d));
    p.inputs = InputSpace(m_x);
  } else if (variant == "linear_softmax") {
    p.inputs = InputSpace(m_x, d, detail::number_array(j, "features", static_cast<size_t>(m_x) * d));
    sf = ScoringFunction::linear_softmax(m_y, p.inputs);
  } else if (variant == "log_bilinear") {
    const int len = detail::int_field(j, "context_len");
    const Json& h = detail::field(j, "histories");
    if (!h.is_array() || h.size() != static_cast<size_t>(m_x) * len)
      throw ConfigError("histories: expected m_x * context_len word ids");
    sf = ScoringFunction::log_bilinear(m_y, d, len, h.get<std::vector<int>>());
    p.inputs = InputSpace(m_x);
  } else {
    throw ConfigError("variant: unknown '" + variant_j.get<std::string>() + "'");
  }
  if (bias) sf = sf.with_context_bias();
  p.model = sf;
  p.p_x = detail::to_vector(detail::number_array(j, "p_x", static_cast<size_t>(m_x)));
  const auto rows = detail::number_array(j, "p_y_given_x", static_cast<size_t>(m_x) * m_y);
  p.p_y_given_x.resize(m_x, m_y);
  for (Input x = 0; x < m_x; ++x)
    for (Label y = 0; y < m_y; ++y) p.p_y_given_x(x, y) = rows[static_cast<size_t>(x) * m_y + y];
  if (j.contains("theta_star")) {
    GroundTruth t{sf, detail::to_vector(detail::number_array(j, "theta_star", static_cast<size_t>(sf.num_params()))),
                  std::nullopt};
    if (j.contains("gamma_star")) {
      if (!j["gamma_star"].is_number()) throw ConfigError("gamma_star: expected a number");
      t.gamma = j["gamma_star"].get<double>();
    }
    p.truth = std::move(t);
  } else if (j.contains("gamma_star")) {
    throw ConfigError("gamma_star: given without theta_star");
  }
  p.validate();
  return p;
}

inline std::string problem_to_string(const ConditionalProblem& p) { return problem_to_json(p).dump(1) + "\n"; }

inline void write_problem(const std::string& path, const ConditionalProblem& p) {
  p.validate();
  write_file(path, problem_to_string(p));
}

inline ConditionalProblem read_problem(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("problem '" + path + "': " + e.what());
  }
  return problem_from_json(j);
}

// ---------------------------------------------------------------------------
// Dataset JSONL: one provenance header line, then {x, y, neg} per example.

inline std::string dataset_to_jsonl(const Dataset& d) {
  std::ostringstream os;
  Json head;
  head["provenance"] = {{"seed", d.provenance.seed},
                        {"stream", d.provenance.stream},
                        {"K", d.provenance.K},
                        {"noise_hash", hex64(d.provenance.noise_hash)}};
  head["n"] = d.size();
  os << head.dump() << '\n';
  for (size_t i = 0; i < d.size(); ++i) {
    Json r;
    r["x"] = d.x[i];
    r["y"] = d.y[i];
    const auto negs = d.negatives_of(i);
    r["neg"] = std::vector<int>(negs.begin(), negs.end());
    os << r.dump() << '\n';
  }
  return os.str();
}

inline Dataset dataset_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset: empty file");
  Dataset d;
  try {
    const Json head = Json::parse(line);
    const Json& prov = detail::field(head, "provenance");
    d.provenance.seed = prov.at("seed").get<uint64_t>();
    d.provenance.stream = prov.at("stream").get<uint64_t>();
    d.provenance.K = prov.at("K").get<int>();
    d.provenance.noise_hash = std::stoull(prov.at("noise_hash").get<std::string>(), nullptr, 16);
    d.K = d.provenance.K;
    size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const Json r = Json::parse(line);
      const auto negs = r.at("neg").get<std::vector<int>>();
      if (static_cast<int>(negs.size()) != d.K)
        throw ConfigError("dataset line " + std::to_string(line_no) + ": neg must have K entries");
      d.x.push_back(r.at("x").get<int>());
      d.y.push_back(r.at("y").get<int>());
      d.negatives.insert(d.negatives.end(), negs.begin(), negs.end());
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Counts file: "token count" per line.

struct TokenCounts {
  std::vector<std::string> tokens;
  std::vector<long long> counts;
};

inline TokenCounts read_counts(const std::string& path) {
  std::istringstream in(read_file(path));
  TokenCounts tc;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string tok;
    long long c = 0;
    if (!(ls >> tok >> c) || c < 0)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'token count' with count >= 0");
    tc.tokens.push_back(tok);
    tc.counts.push_back(c);
  }
  return tc;
}

// ---------------------------------------------------------------------------
// Reports

inline Json metrics_to_json(const EvalResult& m) {
  return {{"kl", m.kl}, {"d_metric", m.d_metric}, {"worst_tv", m.worst_tv}};
}

inline Json report_to_json(const EstimationReport& r) {
  Json j;
  j["objective"] = to_string(r.objective);
  j["theta"] = detail::to_json_array(r.theta);
  if (r.gamma) j["gamma"] = *r.gamma;
  j["final_objective"] = r.objective_value;
  j["grad_norm"] = r.grad_norm;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  Json trace = Json::array();
  for (const auto& t : r.trace) trace.push_back({t.iteration, t.value});
  j["trace"] = trace;
  j["config_hash"] = hex64(r.config_hash);
  j["dataset_hash"] = hex64(r.data_hash);
  if (r.metrics) j["metrics"] = metrics_to_json(*r.metrics);
  return j;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

inline Json covariance_to_json(const CovarianceReport& r) {
  Json j;
  j["estimator"] = r.estimator;
  j["K"] = r.K;
  j["mode"] = r.mode.str();
  j["inverse"] = matrix_to_json(r.inverse);
  j["information"] = matrix_to_json(r.information);
  if (r.std_error.size() > 0) j["information_std_error"] = matrix_to_json(r.std_error);
  j["mse_infinity"] = r.mse_infinity;
  if (r.factor_gap) j["factor_gap"] = *r.factor_gap;
  return j;
}

inline Json replication_to_json(const ReplicationSummary& s) {
  Json j;
  j["estimator"] = s.estimator;
  j["K"] = s.K;
  j["n"] = s.n;
  j["replications"] = s.replications;
  j["empirical_cov"] = matrix_to_json(s.empirical_cov);
  j["mean_bias"] = detail::to_json_array(s.mean_bias);
  j["empirical_mse"] = s.empirical_mse;
  if (s.theory) {
    j["theory"] = matrix_to_json(*s.theory);
    j["rel_frobenius"] = s.rel_frobenius;
    j["theory_mse"] = s.theory_mse;
    j["mse_rel_error"] = s.mse_rel_error;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Run manifests

struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, uint64_t>> inputs;  // path, content hash
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  std::string version = kArtifactVersion;

  void add_input(const std::string& path) { inputs.emplace_back(path, file_hash(path)); }

  // Covers everything that determines the outputs (not the wall clock).
  uint64_t hash() const {
    std::ostringstream os;
    os << command << '\n' << seed << '\n' << version << '\n';
    for (const auto& a : args) os << a << '\x1f';
    for (const auto& [p, h] : inputs) os << p << '=' << h << '\n';
    for (const auto& o : outputs) os << o << '\n';
    return fnv1a(os.str());
  }

  Json to_json() const {
    Json j;
    j["command"] = command;
    j["args"] = args;
    j["seed"] = seed;
    Json in = Json::object();
    for (const auto& [p, h] : inputs) in[p] = hex64(h);
    j["inputs"] = in;
    j["outputs"] = outputs;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["version"] = version;
    j["hash"] = hex64(hash());
    return j;
  }
};

// CSV text with the manifest comment line and a header.
inline std::string csv_with_manifest(const RunManifest& m, const std::string& header,
                                     const std::vector<std::string>& rows) {
  std::ostringstream os;
  os << "# manifest " << hex64(m.hash()) << '\n' << header << '\n';
  for (const auto& r : rows) os << r << '\n';
  return os.str();
}

}  // namespace nce

#pragma once

// JSON encoding shared by sandbox snapshots and equilibrium results. Keys are
// emitted in a fixed order; doubles round-trip exactly.

#include <json.hpp>

#include <cstddef>
#include <stdexcept>
#include <string>

#include "smfg/core.hpp"
#include "smfg/oracle.hpp"

namespace smfg {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

inline Json encode_vector(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json encode_matrix(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline Vector decode_vector(const Json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("expected a non-empty numeric array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline Matrix decode_matrix(const Json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) {
    throw std::invalid_argument("expected a non-empty array of numeric rows");
  }
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != j[0].size()) throw std::invalid_argument("ragged matrix rows");
    for (std::size_t c = 0; c < j[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

inline Json to_json(const MeanField& mu) { return encode_vector(mu.probs()); }
inline Json to_json(const Policy& pi) { return encode_matrix(pi.table()); }

inline MeanField mean_field_from_json(const Json& j) { return MeanField(decode_vector(j)); }
inline Policy policy_from_json(const Json& j) { return Policy(decode_matrix(j)); }

inline void check_schema(const Json& j, const char* kind) {
  if (!j.is_object() || !j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion) {
    throw std::invalid_argument(std::string("unsupported or missing schema_version for ") + kind);
  }
  if (j.at("kind").get<std::string>() != kind) {
    throw std::invalid_argument(std::string("expected document kind ") + kind);
  }
}

inline Json to_json(const BmfePair& b) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "bmfe";
  j["mu"] = to_json(b.mean_field);
  j["pi"] = to_json(b.policy);
  j["residual_policy"] = b.residual_policy;
  j["residual_mu"] = b.residual_mu;
  j["iterations"] = b.iterations;
  j["converged"] = b.converged;
  return j;
}

inline BmfePair bmfe_from_json(const Json& j) {
  check_schema(j, "bmfe");
  return BmfePair{policy_from_json(j.at("pi")), mean_field_from_json(j.at("mu")),
                  j.at("residual_policy").get<double>(), j.at("residual_mu").get<double>(),
                  j.at("iterations").get<std::size_t>(), j.at("converged").get<bool>()};
}

inline Json to_json(const ContractionEstimate& c) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "contraction_estimate";
  j["d1_hat"] = c.d1_hat;
  j["d2_hat"] = c.d2_hat;
  j["d3_hat"] = c.d3_hat;
  j["d_hat"] = c.d_hat();
  j["contraction_verified"] = c.contraction_verified();
  return j;
}

inline ContractionEstimate contraction_from_json(const Json& j) {
  check_schema(j, "contraction_estimate");
  return {j.at("d1_hat").get<double>(), j.at("d2_hat").get<double>(), j.at("d3_hat").get<double>()};
}

}  // namespace smfg

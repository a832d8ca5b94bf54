#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "frobflat/pipeline.hpp"

namespace frobflat {

inline constexpr const char* kResultFormat = "frobflat-result-v1";

// Everything a flatten run emits; serialized as one JSON bundle.
struct ResultBundle {
  FlattenConfig config;
  FlattenResult result;
  ResidualReport report;  // finite-difference residuals and norm table
  Gates gates;
};

// Stable key order; the last key is "digest", the content hash of the rest.
nlohmann::ordered_json bundle_json(const ResultBundle& b);
// Throws ProvenanceError (stage "verify") on a wrong format tag or digest.
ResultBundle bundle_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json report_json(const ResidualReport& rep);
ResidualReport report_from_json(const nlohmann::ordered_json& j);

// One row per probe: point coordinates, span, relation, commutator, det.
std::string residual_csv(const ResidualReport& rep);
std::string gain_csv(const std::vector<GainRow>& rows);

// Heatmap of log10 of one probe residual ("span", "relation", "commutator"),
// binned over the first two flat coordinates.
std::string residual_svg(const ResidualReport& rep, const std::string& which, int bins = 16);

}  // namespace frobflat

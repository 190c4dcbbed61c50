#pragma once

#include "vitalhmm/hmm.hpp"

#include <json.hpp>

#include <filesystem>

namespace vitalhmm {

inline constexpr const char* kHmmFormatTag = "hmm-v1";

/// Emission records carry a `kind` field: "gmm" or "flow".
std::unique_ptr<EmissionModel> emission_from_json(const nlohmann::json& j);

/// {"format": "hmm-v1", "n", "log_q", "log_A", "emission_kind", "emissions"}
nlohmann::json hmm_to_json(const HmmModel& model);
HmmModel hmm_from_json(const nlohmann::json& j);

/// A classifier pair in the hmm-v1 format; `metadata` is merged into the
/// top-level object (e.g. {"discriminative": true}).
nlohmann::json pair_to_json(const ClassifierPair& pair, const nlohmann::json& metadata = {});
ClassifierPair pair_from_json(const nlohmann::json& j);

void save_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace vitalhmm

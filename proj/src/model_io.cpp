#include "vitalhmm/model_io.hpp"

#include "vitalhmm/errors.hpp"
#include "vitalhmm/flow.hpp"
#include "vitalhmm/gmm.hpp"

#include <fstream>

namespace vitalhmm {
namespace {

void require_format(const nlohmann::json& j) {
  if (!j.contains("format") || j.at("format") != kHmmFormatTag) {
    throw ContractError("expected a model record tagged '" + std::string(kHmmFormatTag) + "'");
  }
}

}  // namespace

std::unique_ptr<EmissionModel> emission_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "gmm") return std::make_unique<GmmEmission>(GmmEmission::from_json(j));
  if (kind == "flow") return std::make_unique<FlowEmission>(FlowEmission::from_json(j));
  throw ContractError("unknown emission kind '" + kind + "'");
}

nlohmann::json hmm_to_json(const HmmModel& model) {
  const auto n = static_cast<Eigen::Index>(model.states());
  nlohmann::json j;
  j["format"] = kHmmFormatTag;
  j["n"] = model.states();
  j["log_q"] = std::vector<double>(model.log_initial().data(), model.log_initial().data() + n);
  std::vector<std::vector<double>> a(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) a[static_cast<std::size_t>(r)].push_back(model.log_transition()(r, c));
  }
  j["log_A"] = a;
  j["emission_kind"] = std::string(model.emission(0).kind());
  nlohmann::json em = nlohmann::json::array();
  for (std::size_t s = 0; s < model.states(); ++s) em.push_back(model.emission(s).to_json());
  j["emissions"] = em;
  return j;
}

HmmModel hmm_from_json(const nlohmann::json& j) {
  require_format(j);
  try {
    const auto n = j.at("n").get<std::size_t>();
    const auto q = j.at("log_q").get<std::vector<double>>();
    const auto a = j.at("log_A").get<std::vector<std::vector<double>>>();
    if (q.size() != n || a.size() != n || j.at("emissions").size() != n) {
      throw ContractError("hmm-v1 record has inconsistent state count");
    }
    Vector log_q = Eigen::Map<const Vector>(q.data(), static_cast<Eigen::Index>(n));
    Matrix log_a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
      if (a[r].size() != n) throw ContractError("hmm-v1 transition row has wrong length");
      for (std::size_t c = 0; c < n; ++c) log_a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a[r][c];
    }
    std::vector<std::unique_ptr<EmissionModel>> emissions;
    for (const auto& ej : j.at("emissions")) emissions.push_back(emission_from_json(ej));
    return HmmModel(std::move(log_q), std::move(log_a), std::move(emissions));
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed hmm-v1 record: ") + e.what());
  }
}

nlohmann::json pair_to_json(const ClassifierPair& pair, const nlohmann::json& metadata) {
  nlohmann::json j;
  j["format"] = kHmmFormatTag;
  j["kind"] = "classifier_pair";
  j["log_prior0"] = pair.log_prior0;
  j["log_prior1"] = pair.log_prior1;
  j["model0"] = hmm_to_json(pair.model0);
  j["model1"] = hmm_to_json(pair.model1);
  j["discriminative"] = false;
  if (metadata.is_object()) {
    for (auto it = metadata.begin(); it != metadata.end(); ++it) j[it.key()] = it.value();
  }
  return j;
}

ClassifierPair pair_from_json(const nlohmann::json& j) {
  require_format(j);
  if (j.value("kind", "") != "classifier_pair") throw ContractError("record is not a classifier pair");
  ClassifierPair pair;
  pair.model0 = hmm_from_json(j.at("model0"));
  pair.model1 = hmm_from_json(j.at("model1"));
  pair.log_prior0 = j.at("log_prior0").get<double>();
  pair.log_prior1 = j.at("log_prior1").get<double>();
  if (std::abs(std::exp(pair.log_prior0) + std::exp(pair.log_prior1) - 1.0) > 1e-9) {
    throw ContractError("class priors do not sum to 1");
  }
  return pair;
}

void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace vitalhmm

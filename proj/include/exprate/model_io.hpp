#pragma once

#include <filesystem>

#include "json.hpp"

#include "exprate/bms_search.hpp"
#include "exprate/simulator.hpp"

namespace exprate {

nlohmann::json to_json(const BmsStructure& s);
BmsStructure structure_from_json(const nlohmann::json& j);

/// Everything needed to score or report a fit later; profile tables are
/// included, CV tables are not.
nlohmann::json to_json(const ExperienceModel& model);
ExperienceModel model_from_json(const nlohmann::json& j);

void save_model(const ExperienceModel& model, const std::filesystem::path& path);
ExperienceModel load_model(const std::filesystem::path& path);

/// Missing keys keep SimSpec::defaults(); unknown keys are a SchemaError.
nlohmann::json to_json(const SimSpec& spec);
SimSpec simspec_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace exprate

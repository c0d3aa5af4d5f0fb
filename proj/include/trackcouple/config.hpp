#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "trackcouple/coupling.hpp"
#include "trackcouple/optimizer.hpp"
#include "trackcouple/synthetic.hpp"

namespace trackcouple {

// JSON documents. Unknown keys and ill-typed values throw kConfigInvalid with
// the key name in the message; missing keys keep their defaults.
SceneConfig scene_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SceneConfig& config);

LossConfig loss_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const LossConfig& config);

// Optimizer keys plus an optional nested "loss" object.
OptimConfig optim_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const OptimConfig& config);

// Throws kIo for a missing file, kConfigInvalid for malformed JSON.
nlohmann::json load_json(const std::filesystem::path& path);

// Term toggles of the named ablation: none (alias branch-only), cons, cam,
// cons+cam (alias full), selfsup, all. Throws kConfigInvalid otherwise.
LossConfig apply_ablation(LossConfig base, const std::string& name);
const std::vector<std::string>& ablation_names();

}  // namespace trackcouple

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include "bsesprit/channel_model.hpp"

namespace bsesprit::detail {

Scenario scenario_from_json_value(const nlohmann::json& j);
nlohmann::json scenario_to_json_value(const Scenario& sc);
void validate_scenario(const Scenario& sc);

}  // namespace bsesprit::detail

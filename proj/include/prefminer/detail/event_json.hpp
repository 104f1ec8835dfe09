#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "prefminer/event.hpp"

namespace prefminer::detail {

nlohmann::ordered_json event_to_json(const Event& event, bool include_user = true);
std::optional<Event> event_from_json(const nlohmann::json& obj, std::string* reason,
                                     const std::string* default_user = nullptr);

}  // namespace prefminer::detail

#pragma once

// Internal JSON helpers shared by the library sources.

#include "hsicnn/network.hpp"
#include "json.hpp"

namespace hsicnn {

nlohmann::json network_spec_to_json_value(const NetworkSpec& s);
NetworkSpec network_spec_from_json_value(const nlohmann::json& j, const NetworkSpec& defaults);

}  // namespace hsicnn

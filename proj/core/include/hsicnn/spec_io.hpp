#pragma once

#include <string>

#include "hsicnn/network.hpp"

namespace hsicnn {

// JSON mirrors of the architecture descriptions, e.g.
//   {"bands": 200, "classes": 8, "patch": 5, "filters": 128,
//    "residual_modules": 2, "dropout_rate": 0.5}
//   {"branches": [ {...}, {...} ]}
// `bands` and `classes` are required; the rest fall back to defaults.
std::string to_json(const NetworkSpec& spec);
std::string to_json(const CrossDomainSpec& spec);
NetworkSpec network_spec_from_json(const std::string& text);
CrossDomainSpec cross_domain_spec_from_json(const std::string& text);

}  // namespace hsicnn

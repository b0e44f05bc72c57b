#include "hsicnn/spec_io.hpp"

#include "json.hpp"
#include "spec_json.hpp"

namespace hsicnn {

using nlohmann::json;

json network_spec_to_json_value(const NetworkSpec& s) {
  return json{{"bands", s.bands},
              {"classes", s.classes},
              {"patch", s.patch},
              {"filters", s.filters},
              {"residual_modules", s.residual_modules},
              {"dropout_rate", s.dropout_rate}};
}

NetworkSpec network_spec_from_json_value(const json& j, const NetworkSpec& defaults) {
  if (!j.is_object()) throw ConfigError("network spec: expected a JSON object");
  NetworkSpec s = defaults;
  try {
    s.bands = j.value("bands", s.bands);
    s.classes = j.value("classes", s.classes);
    s.patch = j.value("patch", s.patch);
    s.filters = j.value("filters", s.filters);
    s.residual_modules = j.value("residual_modules", s.residual_modules);
    s.dropout_rate = j.value("dropout_rate", s.dropout_rate);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network spec: ") + e.what());
  }
  return s;
}

std::string to_json(const NetworkSpec& spec) { return network_spec_to_json_value(spec).dump(); }

std::string to_json(const CrossDomainSpec& spec) {
  json branches = json::array();
  for (const auto& b : spec.branches) branches.push_back(network_spec_to_json_value(b));
  return json{{"branches", branches}}.dump();
}

NetworkSpec network_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network spec: ") + e.what());
  }
  if (!j.contains("bands") || !j.contains("classes")) {
    throw ConfigError("network spec: 'bands' and 'classes' are required");
  }
  NetworkSpec s = network_spec_from_json_value(j, NetworkSpec{});
  s.validate();
  return s;
}

CrossDomainSpec cross_domain_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cross-domain spec: ") + e.what());
  }
  if (!j.is_object() || !j.contains("branches") || !j["branches"].is_array()) {
    throw ConfigError("cross-domain spec: expected {\"branches\": [...]}");
  }
  CrossDomainSpec s;
  for (const auto& b : j["branches"]) {
    if (!b.contains("bands") || !b.contains("classes")) {
      throw ConfigError("cross-domain spec: every branch needs 'bands' and 'classes'");
    }
    s.branches.push_back(network_spec_from_json_value(b, NetworkSpec{}));
  }
  s.validate();
  return s;
}

}  // namespace hsicnn

#pragma once

#include <CLI11.hpp>
#include <json.hpp>
#include <string>
#include <vector>

namespace mtdeblur::cli {

// CLI11 config formatter reading JSON objects whose keys are long flag
// names. Top-level keys belong to `section` (the invoked subcommand);
// a nested object under a subcommand name addresses that subcommand.
class JsonConfig : public CLI::Config {
 public:
  std::string section;
  std::vector<std::string> subcommands;

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConfigError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config file must contain a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      const bool nested = value.is_object() &&
                          std::find(subcommands.begin(), subcommands.end(), key) != subcommands.end();
      if (nested) {
        if (key != section) continue;
        for (const auto& [k, v] : value.items()) items.push_back(item({section}, k, v));
      } else {
        items.push_back(item(section.empty() ? std::vector<std::string>{}
                                             : std::vector<std::string>{section},
                             key, value));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConfigError("unsupported config value " + v.dump());
  }

  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& key,
                              const nlohmann::json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = key;
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    } else {
      it.inputs.push_back(scalar(v));
    }
    return it;
  }
};

}  // namespace mtdeblur::cli

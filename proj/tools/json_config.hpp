#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace axir::cli {

// CLI11 config reader/writer for JSON files. Top-level keys set options of
// the main app; an object keyed by a subcommand name sets that subcommand's
// options. Explicit command-line flags override file values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return to_json(app, default_also).dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be a JSON object");
    std::vector<CLI::ConfigItem> out;
    collect(j, "", {}, out);
    return out;
  }

  static nlohmann::json to_json(const CLI::App* app, bool default_also) {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames()[0];
      if (opt->get_type_size() != 0) {
        if (opt->count() == 1 && opt->get_expected_max() <= 1) {
          j[name] = typed(opt, opt->results().at(0));
        } else if (opt->count() >= 1) {
          nlohmann::json a = nlohmann::json::array();
          for (const auto& r : opt->results()) a.push_back(typed(opt, r));
          j[name] = a;
        } else if (default_also && !opt->get_default_str().empty()) {
          j[name] = typed(opt, opt->get_default_str());
        }
      } else if (opt->count() > 0 || default_also) {
        j[name] = opt->count() > 0 && opt->as<bool>();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      if (!sub->get_name().empty()) j[sub->get_name()] = to_json(sub, default_also);
    }
    return j;
  }

 private:
  // Numbers and booleans keep their JSON type; everything else stays a string.
  static nlohmann::json typed(const CLI::Option* opt, const std::string& text) {
    const std::string type = opt->get_type_name();
    if (type == "BOOLEAN" || opt->get_expected_min() == 0) return text == "true" || text == "1";
    if (type == "INT" || type == "UINT" || type == "FLOAT") {
      const auto v = nlohmann::json::parse(text, nullptr, false);
      if (v.is_number()) return v;
    }
    return text;
  }

  static void collect(const nlohmann::json& j, const std::string& name,
                      std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
    if (j.is_object()) {
      if (!name.empty()) parents.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) collect(*it, it.key(), parents, out);
      return;
    }
    CLI::ConfigItem item;
    item.name = name;
    item.parents = parents;
    auto scalar = [&](const nlohmann::json& v) -> std::string {
      if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number()) return v.dump();
      throw CLI::ConversionError("config: unsupported value for " + name);
    };
    if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(scalar(v));
    } else {
      item.inputs.push_back(scalar(j));
    }
    out.push_back(std::move(item));
  }
};

}  // namespace axir::cli

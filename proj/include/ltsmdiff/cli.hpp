#pragma once

#include <string>

#include <json.hpp>

namespace ltsm::cli {

/// Entry point for the `ltsmdiff` tool. Commands: train, forecast, evaluate,
/// transfer, ablate. Returns the process exit code (0 success, 2 usage or
/// configuration error, 1 runtime failure).
int run(int argc, const char* const* argv);

/// Flat dotted-key configuration with baked-in defaults; unknown keys are
/// rejected. Values come from (in order) defaults, a --config JSON file, and
/// --<key> <value> command-line overrides.
class FlatConfig {
public:
    FlatConfig();

    void apply_file(const std::string& path);
    void apply_override(const std::string& key, const std::string& raw_value);
    void apply_json(const nlohmann::json& j);

    const nlohmann::json& values() const { return values_; }

    bool get_bool(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;

private:
    const nlohmann::json& at(const std::string& key) const;
    nlohmann::json values_;
};

}  // namespace ltsm::cli

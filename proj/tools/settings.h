#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace cgra::cli {

// Flat key/value settings for one subcommand: a JSON config file supplies
// values, command-line flags override them. Every value read is echoed
// into resolved() for the manifest.
class Settings {
public:
    explicit Settings(CLI::App* app);

    void option(const std::string& key, const std::string& help);
    void flag(const std::string& key, const std::string& help);
    // Repeatable option; config files give a JSON array.
    void list(const std::string& key, const std::string& help);

    // Call after parsing.
    void finalize();

    bool has(const std::string& key) const;
    std::string str(const std::string& key, const std::string& def);
    std::optional<std::string> maybe_str(const std::string& key);
    double real(const std::string& key, double def);
    std::optional<double> maybe_real(const std::string& key);
    long integer(const std::string& key, long def);
    std::optional<long> maybe_integer(const std::string& key);
    std::uint64_t seed();
    bool boolean(const std::string& key, bool def = false);
    std::vector<std::string> strings(const std::string& key);

    // Path that must be given and exist.
    std::filesystem::path input(const std::string& key);
    std::optional<std::filesystem::path> maybe_input(const std::string& key);
    // Path that must be given; parent directory is created.
    std::filesystem::path output(const std::string& key);
    std::optional<std::filesystem::path> maybe_output(const std::string& key);

    const nlohmann::json& resolved() const noexcept { return resolved_; }
    CLI::App* app() const noexcept { return app_; }

private:
    std::optional<nlohmann::json> lookup(const std::string& key) const;

    CLI::App* app_;
    std::string config_path_;
    std::map<std::string, std::unique_ptr<std::string>> raw_;
    std::map<std::string, std::unique_ptr<bool>> flags_;
    std::map<std::string, std::unique_ptr<std::vector<std::string>>> lists_;
    std::map<std::string, CLI::Option*> opts_;
    nlohmann::json config_ = nlohmann::json::object();
    nlohmann::json cli_ = nlohmann::json::object();
    nlohmann::json resolved_ = nlohmann::json::object();
};

inline constexpr const char* kToolVersion = CGRA_TOOL_VERSION;

struct Manifest {
    std::string command;
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;
    nlohmann::json extra = nlohmann::json::object();
};

// {command, tool_version, seed, config, inputs: {path: sha256}, outputs: ...}
void write_manifest(const std::filesystem::path& path, const Manifest& m, const Settings& s);

std::filesystem::path manifest_path_for(const std::filesystem::path& output);

}  // namespace cgra::cli

#include "settings.h"

#include <charconv>

#include "cgra/error.h"
#include "cgra/json_util.h"

namespace cgra::cli {

namespace fs = std::filesystem;

Settings::Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file of settings; flags override it");
    option("seed", "Master seed (recorded in every output)");
    option("manifest", "Where to write the run manifest");
}

void Settings::option(const std::string& key, const std::string& help) {
    auto& slot = raw_[key];
    slot = std::make_unique<std::string>();
    opts_[key] = app_->add_option("--" + key, *slot, help);
}

void Settings::flag(const std::string& key, const std::string& help) {
    auto& slot = flags_[key];
    slot = std::make_unique<bool>(false);
    opts_[key] = app_->add_flag("--" + key, *slot, help);
}

void Settings::list(const std::string& key, const std::string& help) {
    auto& slot = lists_[key];
    slot = std::make_unique<std::vector<std::string>>();
    opts_[key] = app_->add_option("--" + key, *slot, help);
}

void Settings::finalize() {
    if (!config_path_.empty()) {
        config_ = parse_json_file(config_path_);
        if (!config_.is_object()) throw ValidationError(config_path_ + ": config must be a JSON object");
        for (const auto& [k, v] : config_.items()) {
            if (!opts_.contains(k)) throw ValidationError(config_path_ + ": unknown setting '" + k + "'");
        }
        resolved_["config_file"] = config_path_;
    }
    for (const auto& [key, opt] : opts_) {
        if (opt->count() == 0) continue;
        if (raw_.contains(key)) cli_[key] = *raw_.at(key);
        if (flags_.contains(key)) cli_[key] = *flags_.at(key);
        if (lists_.contains(key)) cli_[key] = *lists_.at(key);
    }
}

std::optional<nlohmann::json> Settings::lookup(const std::string& key) const {
    if (cli_.contains(key)) return cli_.at(key);
    if (config_.contains(key)) return config_.at(key);
    return std::nullopt;
}

bool Settings::has(const std::string& key) const { return lookup(key).has_value(); }

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
    T v{};
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw ValidationError("--" + key + ": cannot parse '" + s + "'");
    return v;
}

double parse_real(const std::string& key, const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw ValidationError("--" + key + ": cannot parse '" + s + "'");
    }
}

}  // namespace

std::optional<std::string> Settings::maybe_str(const std::string& key) {
    const auto j = lookup(key);
    if (!j) return std::nullopt;
    if (!j->is_string()) throw ValidationError("setting '" + key + "' must be a string");
    resolved_[key] = *j;
    return j->get<std::string>();
}

std::string Settings::str(const std::string& key, const std::string& def) {
    auto v = maybe_str(key);
    if (!v) resolved_[key] = def;
    return v.value_or(def);
}

std::optional<double> Settings::maybe_real(const std::string& key) {
    const auto j = lookup(key);
    if (!j) return std::nullopt;
    double v = 0.0;
    if (j->is_string()) {
        v = parse_real(key, j->get<std::string>());
    } else if (j->is_number()) {
        v = j->get<double>();
    } else {
        throw ValidationError("setting '" + key + "' must be a number");
    }
    resolved_[key] = v;
    return v;
}

double Settings::real(const std::string& key, double def) {
    auto v = maybe_real(key);
    if (!v) resolved_[key] = def;
    return v.value_or(def);
}

std::optional<long> Settings::maybe_integer(const std::string& key) {
    const auto j = lookup(key);
    if (!j) return std::nullopt;
    long v = 0;
    if (j->is_string()) {
        v = parse_number<long>(key, j->get<std::string>());
    } else if (j->is_number_integer()) {
        v = j->get<long>();
    } else {
        throw ValidationError("setting '" + key + "' must be an integer");
    }
    resolved_[key] = v;
    return v;
}

long Settings::integer(const std::string& key, long def) {
    auto v = maybe_integer(key);
    if (!v) resolved_[key] = def;
    return v.value_or(def);
}

std::uint64_t Settings::seed() {
    const auto j = lookup("seed");
    std::uint64_t v = 1;
    if (j) {
        if (j->is_string()) {
            v = parse_number<std::uint64_t>("seed", j->get<std::string>());
        } else if (j->is_number_unsigned()) {
            v = j->get<std::uint64_t>();
        } else {
            throw ValidationError("setting 'seed' must be a non-negative integer");
        }
    }
    resolved_["seed"] = v;
    return v;
}

bool Settings::boolean(const std::string& key, bool def) {
    const auto j = lookup(key);
    bool v = def;
    if (j) {
        if (!j->is_boolean()) throw ValidationError("setting '" + key + "' must be true or false");
        v = j->get<bool>();
    }
    resolved_[key] = v;
    return v;
}

std::vector<std::string> Settings::strings(const std::string& key) {
    const auto j = lookup(key);
    std::vector<std::string> v;
    if (j) {
        try {
            v = j->is_string() ? std::vector<std::string>{j->get<std::string>()}
                               : j->get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception&) {
            throw ValidationError("setting '" + key + "' must be a list of strings");
        }
    }
    resolved_[key] = v;
    return v;
}

std::optional<fs::path> Settings::maybe_input(const std::string& key) {
    auto s = maybe_str(key);
    if (!s) return std::nullopt;
    if (!fs::exists(*s)) throw ValidationError("--" + key + ": no such file " + *s);
    return fs::path(*s);
}

fs::path Settings::input(const std::string& key) {
    auto p = maybe_input(key);
    if (!p) throw ValidationError("--" + key + " is required");
    return *p;
}

std::optional<fs::path> Settings::maybe_output(const std::string& key) {
    auto s = maybe_str(key);
    if (!s) return std::nullopt;
    fs::path p(*s);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
}

fs::path Settings::output(const std::string& key) {
    auto p = maybe_output(key);
    if (!p) throw ValidationError("--" + key + " is required");
    return *p;
}

fs::path manifest_path_for(const fs::path& output) {
    fs::path p = output;
    p += ".manifest.json";
    return p;
}

void write_manifest(const fs::path& path, const Manifest& m, const Settings& s) {
    nlohmann::json j;
    j["command"] = m.command;
    j["tool_version"] = kToolVersion;
    j["seed"] = s.resolved().contains("seed") ? s.resolved().at("seed") : nlohmann::json(nullptr);
    j["config"] = s.resolved();
    auto hashes = [](const std::vector<fs::path>& paths) {
        nlohmann::json h = nlohmann::json::object();
        for (const auto& p : paths) h[p.string()] = sha256_hex(read_text_file(p));
        return h;
    };
    j["inputs"] = hashes(m.inputs);
    j["outputs"] = hashes(m.outputs);
    if (!m.extra.empty()) j["extra"] = m.extra;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace cgra::cli

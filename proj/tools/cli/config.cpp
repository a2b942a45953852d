#include "cli/config.hpp"

#include <cstdio>
#include <limits>

#include "deferral/rng.hpp"

namespace deferral::cli {

ConfigObject::ConfigObject(const nlohmann::json& doc, std::string context,
                           std::initializer_list<const char*> allowed)
    : doc_(doc), context_(std::move(context)) {
  if (!doc_.is_object()) throw ConfigError(context_ + " must be an object");
  for (const auto& [key, value] : doc_.items()) {
    bool known = false;
    for (const char* name : allowed) known = known || key == name;
    if (!known) throw ConfigError("unknown field '" + Path(key.c_str()) + "'");
  }
}

std::string ConfigObject::Path(const char* key) const {
  return context_.empty() ? std::string(key) : context_ + "." + key;
}

double ConfigObject::Number(const char* key, double fallback) const {
  if (!Has(key)) return fallback;
  const auto& v = doc_.at(key);
  if (!v.is_number()) throw ConfigError("'" + Path(key) + "' must be a number");
  return v.get<double>();
}

int ConfigObject::Int(const char* key, int fallback) const {
  if (!Has(key)) return fallback;
  const auto& v = doc_.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError("'" + Path(key) + "' must be an integer");
  }
  const auto wide = v.get<long long>();
  if (wide < std::numeric_limits<int>::min() ||
      wide > std::numeric_limits<int>::max()) {
    throw ConfigError("'" + Path(key) + "' is out of range");
  }
  return static_cast<int>(wide);
}

std::uint64_t ConfigObject::U64(const char* key, std::uint64_t fallback) const {
  if (!Has(key)) return fallback;
  const auto& v = doc_.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError("'" + Path(key) + "' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

bool ConfigObject::Bool(const char* key, bool fallback) const {
  if (!Has(key)) return fallback;
  const auto& v = doc_.at(key);
  if (!v.is_boolean()) throw ConfigError("'" + Path(key) + "' must be a boolean");
  return v.get<bool>();
}

std::string ConfigObject::String(const char* key,
                                 const std::string& fallback) const {
  if (!Has(key)) return fallback;
  const auto& v = doc_.at(key);
  if (!v.is_string()) throw ConfigError("'" + Path(key) + "' must be a string");
  return v.get<std::string>();
}

std::string ConfigObject::RequiredString(const char* key) const {
  if (!Has(key)) throw ConfigError("missing field '" + Path(key) + "'");
  return String(key, "");
}

ConfigObject ConfigObject::Object(const char* key,
                                  std::initializer_list<const char*> allowed) const {
  static const nlohmann::json kEmpty = nlohmann::json::object();
  return ConfigObject(Has(key) ? doc_.at(key) : kEmpty, Path(key), allowed);
}

const nlohmann::json& ConfigObject::Raw(const char* key) const {
  if (!Has(key)) throw ConfigError("missing field '" + Path(key) + "'");
  return doc_.at(key);
}

void RequireVersion(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("version")) throw ConfigError("missing field 'version'");
  if (!doc.at("version").is_number_integer() || doc.at("version") != 1) {
    throw ConfigError("unsupported config version");
  }
}

std::string FormatDouble(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string HashHex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(rng::Fnv1a(bytes)));
  return buf;
}

}  // namespace deferral::cli

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "deferral/types.hpp"

namespace deferral::cli {

/// Invalid or unknown configuration content; maps to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Typed, strict view of one JSON object. Every key must be listed in the
/// allowed set and every value must have the requested type.
class ConfigObject {
 public:
  ConfigObject(const nlohmann::json& doc, std::string context,
               std::initializer_list<const char*> allowed);

  bool Has(const char* key) const { return doc_.contains(key); }

  double Number(const char* key, double fallback) const;
  int Int(const char* key, int fallback) const;
  std::uint64_t U64(const char* key, std::uint64_t fallback) const;
  bool Bool(const char* key, bool fallback) const;
  std::string String(const char* key, const std::string& fallback) const;
  std::string RequiredString(const char* key) const;
  ConfigObject Object(const char* key,
                      std::initializer_list<const char*> allowed) const;
  const nlohmann::json& Raw(const char* key) const;

  const std::string& context() const { return context_; }

 private:
  std::string Path(const char* key) const;

  const nlohmann::json& doc_;
  std::string context_;
};

/// Checks the top-level "version" field.
void RequireVersion(const nlohmann::json& doc);

/// %.17g with a '.' decimal separator.
std::string FormatDouble(double value);

/// 16 hex digits of FNV-1a over the bytes.
std::string HashHex(const std::string& bytes);

}  // namespace deferral::cli

#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "iflatcam/error.hpp"

namespace iflatcam::json_util {

/// Rejects any key of `obj` not listed in `allowed`.
void reject_unknown(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view context);

void require_object(const nlohmann::json& obj, std::string_view context);

template <typename T>
T required(const nlohmann::json& obj, const char* key, std::string_view context) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw validation_error(std::string(context) + ": missing field '" + key + "'");
  }
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string(context) + ": field '" + key + "' has wrong type");
  }
}

template <typename T>
T optional(const nlohmann::json& obj, const char* key, T fallback, std::string_view context) {
  if (!obj.contains(key)) return fallback;
  return required<T>(obj, key, context);
}

nlohmann::json read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace iflatcam::json_util

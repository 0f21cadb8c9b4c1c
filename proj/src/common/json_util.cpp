#include "iflatcam/json_util.hpp"

#include <algorithm>
#include <fstream>

namespace iflatcam::json_util {

void require_object(const nlohmann::json& obj, std::string_view context) {
  if (!obj.is_object()) throw validation_error(std::string(context) + ": expected a JSON object");
}

void reject_unknown(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view context) {
  require_object(obj, context);
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw validation_error(std::string(context) + ": unknown field '" + item.key() + "'");
    }
  }
}

nlohmann::json read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw validation_error(path.string() + ": " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw io_error("write failed: " + path.string());
}

}  // namespace iflatcam::json_util

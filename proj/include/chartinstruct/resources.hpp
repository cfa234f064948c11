#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace chartinstruct::resources {

struct Resource {
  std::string_view path;  // relative to resources/, e.g. "templates/v1/novel.txt"
  std::string_view content;
};

const std::vector<Resource>& all();

inline std::optional<std::string_view> find(std::string_view path) {
  for (const auto& r : all()) {
    if (r.path == path) return r.content;
  }
  return std::nullopt;
}

}  // namespace chartinstruct::resources

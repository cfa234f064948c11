#include "chartinstruct/fileio.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "chartinstruct/error.hpp"
#include "chartinstruct/numeric.hpp"

namespace chartinstruct {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::FileUnreadable, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::FileUnreadable, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::pair<std::size_t, std::string>> read_jsonl_lines(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + start, end - start);
    if (!trim(line).empty()) lines.emplace_back(line_no, std::string(line));
    start = end + 1;
  }
  return lines;
}

}  // namespace chartinstruct

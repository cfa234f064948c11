#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include <json.hpp>

#include "chartinstruct/corpus.hpp"
#include "chartinstruct/fileio.hpp"
#include "chartinstruct/gateway.hpp"
#include "chartinstruct/taskgen.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path data_path(const std::string& rel) { return fs::path(CHARTINSTRUCT_TEST_DATA) / rel; }

inline std::string read_data(const std::string& rel) { return chartinstruct::read_file(data_path(rel)); }

// Fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("chartinstruct-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << content;
}

inline std::string completion_for(const std::string& chart_id, chartinstruct::taskgen::TaskKind task) {
  return read_data("completions/" + chart_id + "." + std::string(chartinstruct::taskgen::to_string(task)) + ".txt");
}

// Records the transcribed completion for every entry of the fixture plan
// under the fingerprint of the prompt the built-in templates render.
inline std::size_t record_generation_fixtures(const fs::path& store_dir) {
  using namespace chartinstruct;
  const auto loaded = corpus::load_corpus(data_path("corpus.jsonl"));
  gateway::ReplayStore store(store_dir);
  std::size_t n = 0;
  for (const auto& [line_no, line] : read_jsonl_lines(data_path("plan.jsonl"))) {
    const auto j = nlohmann::json::parse(line);
    const auto chart_id = j["chart_id"].get<std::string>();
    const auto task = *taskgen::task_from_string(j["task"].get<std::string>());
    for (const auto& r : loaded.records) {
      if (r.id != chart_id) continue;
      const auto req = taskgen::build_prompt(r, task);
      gateway::ChatResponse resp;
      resp.text = completion_for(chart_id, task);
      store.record(gateway::ChatRequest::from(req), resp);
      ++n;
    }
  }
  return n;
}

}  // namespace testsupport

#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "rdc/corpus.hpp"
#include "rdc/util.hpp"

namespace rdc::test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(RDC_FIXTURE_DIR) / name; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("rdc-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Lines of newline-terminated text, without the empty piece after the final newline.
inline std::vector<std::string> content_lines(std::string_view text) {
  auto lines = split_lines(text);
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// `n` labeled examples `<prefix>-<i>` with labels cycling through `labels`.
inline DatasetSplit synthetic_split(const LabelSet& labels, std::size_t n, SplitName split = SplitName::Eval,
                                    const std::string& prefix = "x") {
  DatasetSplit out;
  out.dataset_id = labels.dataset_id();
  out.split = split;
  out.label_set = labels;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s-%04zu", prefix.c_str(), i);
    out.examples.push_back(
        {id, "item number " + std::to_string(i) + " about topic " + std::to_string(i % 17),
         labels.labels()[i % labels.size()]});
  }
  return out;
}

}  // namespace rdc::test

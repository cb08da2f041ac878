#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cli.hpp"

namespace geoperc::cli {

using nlohmann::json;
using nlohmann::ordered_json;

struct JsonLine {
  std::size_t line = 0;
  json value;
};

/// Non-blank lines of a JSON-lines file; unreadable files and invalid lines become diagnostics.
std::vector<JsonLine> read_jsonl(const std::string& file, std::vector<Diagnostic>& diags);

/// Writes through a temporary file in the same directory, then renames.
void write_atomic(const std::filesystem::path& file, const std::string& content);

/// Report skeleton with tool name, version, command and the config echo.
ordered_json report_header(const std::string& command, ordered_json config);

std::string dump_report(const ordered_json& report);

/// Two-column markdown table.
std::string markdown_table(const std::string& title,
                           const std::vector<std::pair<std::string, std::string>>& rows);

std::string fixed(double value, int digits = 4);

/// Flag value if positive, else GEOPERC_THREADS, else 1.
std::size_t resolve_threads(int flag);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. If any calls throw, the exception
/// of the lowest index is rethrown after all workers finish.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace geoperc::cli

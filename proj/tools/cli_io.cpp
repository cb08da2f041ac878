#include "cli_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "geoperc/error.hpp"

namespace geoperc::cli {

std::string to_string(const Diagnostic& d) {
  std::string out = d.file;
  if (d.line) out += ":" + std::to_string(d.line);
  return out + ": " + d.defect;
}

std::vector<JsonLine> read_jsonl(const std::string& file, std::vector<Diagnostic>& diags) {
  std::vector<JsonLine> out;
  std::ifstream in(file);
  if (!in) {
    diags.push_back({file, 0, "cannot open file"});
    return out;
  }
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back({line, json::parse(text)});
    } catch (const json::parse_error& e) {
      diags.push_back({file, line, std::string("invalid JSON: ") + e.what()});
    }
  }
  return out;
}

void write_atomic(const std::filesystem::path& file, const std::string& content) {
  namespace fs = std::filesystem;
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, file);
}

ordered_json report_header(const std::string& command, ordered_json config) {
  return ordered_json{{"tool", "geoperc"},
                      {"version", GEOPERC_VERSION},
                      {"command", command},
                      {"config", std::move(config)}};
}

std::string dump_report(const ordered_json& report) { return report.dump(2) + "\n"; }

std::string markdown_table(const std::string& title,
                           const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t w0 = 6, w1 = 5;
  for (const auto& [k, v] : rows) {
    w0 = std::max(w0, k.size());
    w1 = std::max(w1, v.size());
  }
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  std::ostringstream md;
  md << "## " << title << "\n\n";
  md << "| " << pad("metric", w0) << " | " << pad("value", w1) << " |\n";
  md << "|" << std::string(w0 + 2, '-') << "|" << std::string(w1 + 1, '-') << ":|\n";
  for (const auto& [k, v] : rows)
    md << "| " << pad(k, w0) << " | " << std::string(w1 - v.size(), ' ') << v << " |\n";
  return md.str();
}

std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

std::size_t resolve_threads(int flag) {
  if (flag > 0) return static_cast<std::size_t>(flag);
  if (const char* env = std::getenv("GEOPERC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

}  // namespace geoperc::cli

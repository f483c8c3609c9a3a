#pragma once

#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace diffrank::tools {

enum class OutputFormat { Csv, Json };

inline OutputFormat parse_format(const std::string& format) {
  if (format == "csv") return OutputFormat::Csv;
  if (format == "json") return OutputFormat::Json;
  throw std::invalid_argument("unknown output format: " + format);
}

// Writes to the given path, or to stdout when the path is empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot open output file: " + path);
    }
  }

  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

inline void write_json(const std::string& path, const nlohmann::json& doc) {
  Output out(path);
  out.stream() << doc.dump(2) << '\n';
}

}  // namespace diffrank::tools

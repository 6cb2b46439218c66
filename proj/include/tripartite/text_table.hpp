#pragma once

#include <string>
#include <vector>

namespace tripartite {

/// A small table that renders both as aligned text and as comma-delimited rows.
struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

  /// First column left-aligned, the rest right-aligned, two spaces between.
  std::string render_text() const;
  std::string render_csv() const;
};

}  // namespace tripartite

#pragma once

// Figures and plain-text tables rendered from an analysis report JSON.

#include <filesystem>
#include <string>
#include <vector>

#include "vergescope/io.hpp"

namespace vergescope::report {

struct Figure {
  std::string file;  // e.g. "gva_by_depth.svg"
  std::string svg;
};

/// Only figures whose data is present in the report are produced.
std::vector<Figure> figures(const io::Json& analysis);

std::string text_tables(const io::Json& analysis);

/// Writes every figure plus tables.txt into `dir`; returns the file names.
std::vector<std::string> write_report(const io::Json& analysis, const std::filesystem::path& dir);

}  // namespace vergescope::report

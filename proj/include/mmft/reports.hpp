#pragma once

#include <string>
#include <vector>

namespace mmft {

/// Plain aligned-column table. The first column is left-aligned, the rest
/// right-aligned.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header);
  void add_row(std::vector<std::string> row);
  std::string str() const;

 private:
  std::vector<std::vector<std::string>> rows_;
};

std::string fixed(double v, int digits = 4);
std::string percent(double fraction, int digits = 2);

}  // namespace mmft

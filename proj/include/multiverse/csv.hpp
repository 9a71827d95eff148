#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace multiverse::csv {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
};

/// RFC 4180 reader. Every row must have as many fields as the header.
Table parse(std::string_view text);
Table read_file(const std::filesystem::path& path);

std::string format_row(const std::vector<std::string>& fields);
std::string format(const Table& table);
void write_file(const std::filesystem::path& path, const Table& table);

}  // namespace multiverse::csv

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace specnet::io {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);
double parse_double(const std::string &text);
long long parse_integer(const std::string &text);

void write_f64_le(std::ostream &out, std::span<const double> values);
void read_f64_le(std::istream &in, std::span<double> values);

/// Parses "KEY v1; a=..; b=.." header lines into (key, value) pairs after
/// checking the leading tag.
std::vector<std::pair<std::string, std::string>>
parse_header(const std::string &line, const std::string &tag);

/// Collects output files under temporary names and moves them into place
/// only when commit() is called. Uncommitted files are removed on
/// destruction.
class OutputTransaction {
public:
  explicit OutputTransaction(std::filesystem::path directory);
  ~OutputTransaction();
  OutputTransaction(const OutputTransaction &) = delete;
  OutputTransaction &operator=(const OutputTransaction &) = delete;

  /// Returns the temporary path for `name`; write the file there.
  std::filesystem::path stage(const std::string &name);
  void commit();
  const std::filesystem::path &directory() const { return directory_; }

private:
  std::filesystem::path directory_;
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;
  bool committed_ = false;
};

/// Writes `text` to `path` through a temporary file and rename.
void write_text_atomic(const std::filesystem::path &path,
                       const std::string &text);

} // namespace specnet::io

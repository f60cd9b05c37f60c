#include <specnet/errors.h>
#include <specnet/io_util.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <system_error>

namespace specnet::io {

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  if (res.ec != std::errc())
    throw FormatError("cannot format double");
  return std::string(buf, res.ptr);
}

double parse_double(const std::string &text) {
  double value = 0.0;
  const char *begin = text.data();
  const char *end = begin + text.size();
  while (begin != end && (*begin == ' ' || *begin == '\t'))
    ++begin;
  while (end != begin && (end[-1] == ' ' || end[-1] == '\t' ||
                          end[-1] == '\r' || end[-1] == '\n'))
    --end;
  if (begin != end && *begin == '+')
    ++begin;
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end)
    throw FormatError("cannot parse number '" + text + "'");
  return value;
}

long long parse_integer(const std::string &text) {
  const double v = parse_double(text);
  if (v != std::floor(v) || std::abs(v) > 9.007199254740992e15)
    throw FormatError("expected an integer, got '" + text + "'");
  return static_cast<long long>(v);
}

namespace {
std::uint64_t to_le(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little)
    return bits;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i)
    out |= ((bits >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return out;
}
} // namespace

void write_f64_le(std::ostream &out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char *>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double v : values) {
      std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
      out.write(reinterpret_cast<const char *>(&bits), sizeof(bits));
    }
  }
  if (!out)
    throw FormatError("write failed");
}

void read_f64_le(std::istream &in, std::span<double> values) {
  in.read(reinterpret_cast<char *>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (in.gcount() !=
      static_cast<std::streamsize>(values.size() * sizeof(double)))
    throw FormatError("unexpected end of binary payload");
  if constexpr (std::endian::native != std::endian::little) {
    for (double &v : values)
      v = std::bit_cast<double>(to_le(std::bit_cast<std::uint64_t>(v)));
  }
}

std::vector<std::pair<std::string, std::string>>
parse_header(const std::string &line, const std::string &tag) {
  const std::string prefix = tag + " v1";
  if (line.rfind(prefix, 0) != 0)
    throw FormatError("expected header starting with '" + prefix + "'");
  std::vector<std::pair<std::string, std::string>> fields;
  std::istringstream ss(line.substr(prefix.size()));
  std::string item;
  while (std::getline(ss, item, ';')) {
    auto first = item.find_first_not_of(' ');
    if (first == std::string::npos)
      continue;
    item = item.substr(first);
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw FormatError("malformed header field '" + item + "'");
    fields.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return fields;
}

OutputTransaction::OutputTransaction(std::filesystem::path directory)
    : directory_(std::move(directory)) {
  std::filesystem::create_directories(directory_);
}

OutputTransaction::~OutputTransaction() {
  if (committed_)
    return;
  std::error_code ec;
  for (auto &[tmp, final_path] : staged_)
    std::filesystem::remove(tmp, ec);
}

std::filesystem::path OutputTransaction::stage(const std::string &name) {
  auto final_path = directory_ / name;
  auto tmp = directory_ / (name + ".partial");
  staged_.emplace_back(tmp, final_path);
  return tmp;
}

void OutputTransaction::commit() {
  for (auto &[tmp, final_path] : staged_)
    std::filesystem::rename(tmp, final_path);
  committed_ = true;
}

void write_text_atomic(const std::filesystem::path &path,
                       const std::string &text) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out)
      throw FormatError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out)
      throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

} // namespace specnet::io

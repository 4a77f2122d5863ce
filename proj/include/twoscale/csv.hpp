#pragma once

// Small CSV helpers shared by every exporter. Numbers are written in the
// shortest form that round-trips, so identical values give identical bytes.

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace twoscale {

std::string format_double(double value);
std::string format_integer(std::int64_t value);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(&out) {}

  void header(std::initializer_list<std::string_view> names);
  void header(const std::vector<std::string>& names);

  CsvWriter& cell(double value);
  CsvWriter& cell(std::int64_t value);
  CsvWriter& cell(std::uint64_t value);
  CsvWriter& cell(int value) { return cell(static_cast<std::int64_t>(value)); }
  CsvWriter& cell(std::string_view text);
  CsvWriter& cell(const char* text) { return cell(std::string_view(text)); }
  void end_row();

 private:
  void separator();
  std::ostream* out_;
  bool row_started_ = false;
};

}  // namespace twoscale

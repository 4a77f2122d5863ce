#include "twoscale/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <ostream>

#include "twoscale/error.hpp"

namespace twoscale {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::precondition_violation: return "precondition-violation";
    case ErrorKind::no_unique_invariant_measure: return "no-unique-invariant-measure";
    case ErrorKind::convergence_failure: return "convergence-failure";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::step_size_rejected: return "step-size-rejected";
    case ErrorKind::numerical_failure: return "numerical-failure";
    case ErrorKind::unknown_name: return "unknown-name";
    case ErrorKind::domain_error: return "domain-error";
  }
  return "error";
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";  // folds -0
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

std::string format_integer(std::int64_t value) {
  std::array<char, 24> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

void CsvWriter::header(std::initializer_list<std::string_view> names) {
  for (auto n : names) cell(n);
  end_row();
}

void CsvWriter::header(const std::vector<std::string>& names) {
  for (const auto& n : names) cell(std::string_view(n));
  end_row();
}

void CsvWriter::separator() {
  if (row_started_) *out_ << ',';
  row_started_ = true;
}

CsvWriter& CsvWriter::cell(double value) {
  separator();
  *out_ << format_double(value);
  return *this;
}

CsvWriter& CsvWriter::cell(std::int64_t value) {
  separator();
  *out_ << format_integer(value);
  return *this;
}

CsvWriter& CsvWriter::cell(std::uint64_t value) {
  separator();
  std::array<char, 24> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  out_->write(buf.data(), res.ptr - buf.data());
  return *this;
}

CsvWriter& CsvWriter::cell(std::string_view text) {
  separator();
  *out_ << text;
  return *this;
}

void CsvWriter::end_row() {
  *out_ << '\n';
  row_started_ = false;
}

}  // namespace twoscale

#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace msae::csv {

/// Splits one CSV record. Handles double-quoted fields with "" escapes;
/// a trailing '\r' is dropped.
std::vector<std::string> split(std::string_view line);

/// Quotes a field when it contains a comma, quote, or newline.
std::string quote(std::string_view field);

/// Shortest decimal text that parses back to exactly `x`; "NA" never appears,
/// non-finite values render as the empty string.
std::string format(double x);

/// Parses a real number; empty or "NA" gives nullopt, anything else invalid throws ParseError.
std::optional<double> parse_optional(std::string_view field, std::size_t line);

double parse_double(std::string_view field, std::size_t line);
long long parse_int(std::string_view field, std::size_t line);

/// Reads lines, skipping blank ones; returns false at end of stream.
bool next_record(std::istream& in, std::string& line, std::size_t& line_no);

}  // namespace msae::csv

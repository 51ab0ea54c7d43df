#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pagerec::csv {

/// Splits one RFC 4180 record. Quoted fields may contain commas and doubled
/// quotes; embedded newlines are not supported.
std::vector<std::string> split_record(std::string_view line);

/// Quotes a field only when it needs it.
std::string escape(std::string_view field);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace pagerec::csv

#pragma once

#include <string>

namespace geoperc {

/// Shortest round-trip decimal in fixed notation, always with a fractional part
/// ("2.7", "2.0", "-0.32"). Negative zero prints as "0.0". Non-finite input throws.
std::string format_number(double value);

}  // namespace geoperc

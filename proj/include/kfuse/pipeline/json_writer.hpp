#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

namespace kfuse::io {

using Json = nlohmann::ordered_json;

// Formats a finite double with 17 significant digits (round-trip exact).
// Throws InputError on NaN or infinity.
std::string format_real(double v);

// Serializes like Json::dump but with every floating-point number written by
// format_real. indent < 0 gives a single line.
std::string dump(const Json& j, int indent = -1);
void write(std::ostream& os, const Json& j, int indent = -1);

}  // namespace kfuse::io

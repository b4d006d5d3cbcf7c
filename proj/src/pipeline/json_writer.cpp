#include "kfuse/pipeline/json_writer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "kfuse/errors.hpp"

namespace kfuse::io {

namespace {

void newline(std::ostream& os, int indent, int depth) {
    if (indent < 0) return;
    os << '\n' << std::string(static_cast<std::size_t>(indent * depth), ' ');
}

void emit(std::ostream& os, const Json& j, int indent, int depth) {
    constexpr const char* sep = ",";
    switch (j.type()) {
        case Json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << '{';
            bool first = true;
            for (const auto& [key, value] : j.items()) {
                if (!first) os << sep;
                first = false;
                newline(os, indent, depth + 1);
                os << Json(key).dump() << (indent < 0 ? ":" : ": ");
                emit(os, value, indent, depth + 1);
            }
            newline(os, indent, depth);
            os << '}';
            return;
        }
        case Json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            // Arrays of scalars stay on one line.
            const bool flat = std::all_of(j.begin(), j.end(), [](const Json& v) { return v.is_primitive(); });
            os << '[';
            bool first = true;
            for (const auto& value : j) {
                if (!first) os << (flat && indent >= 0 ? ", " : sep);
                first = false;
                if (!flat) newline(os, indent, depth + 1);
                emit(os, value, indent, depth + 1);
            }
            if (!flat) newline(os, indent, depth);
            os << ']';
            return;
        }
        case Json::value_t::number_float:
            os << format_real(j.get<double>());
            return;
        default:
            os << j.dump();
            return;
    }
}

}  // namespace

std::string format_real(double v) {
    if (!std::isfinite(v)) {
        throw InputError("cannot serialize a non-finite number");
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string dump(const Json& j, int indent) {
    std::ostringstream os;
    emit(os, j, indent, 0);
    return os.str();
}

void write(std::ostream& os, const Json& j, int indent) { emit(os, j, indent, 0); }

}  // namespace kfuse::io

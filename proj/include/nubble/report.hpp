#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace nubble {

using Json = nlohmann::json;

enum class ReportKind { Mismatch, Diagnostics, Sweep, Curve, Prompts, BestMatch, Prune, Interaction };

std::string_view to_string(ReportKind kind);
ReportKind report_kind_from_string(std::string_view name);

inline constexpr int kSchemaVersion = 1;

struct Report {
  ReportKind kind;
  Json payload;
  int schema_version = kSchemaVersion;
};

/// Real numbers as printed everywhere in reports and CSVs: 9 significant
/// digits ("%.9g"), always carrying a '.' or exponent so they read back as reals.
std::string format_real(double value);

/// Canonical single-line JSON: keys sorted, no insignificant whitespace,
/// reals via format_real, trailing newline. Equal trees give equal bytes.
std::string canonical_json(const Json& value);

std::string serialize(const Report& report);

/// Parses a serialized report; throws FormatError on malformed input.
Report parse_report(std::string_view text);

}  // namespace nubble

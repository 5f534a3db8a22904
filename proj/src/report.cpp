#include "nubble/report.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <utility>

#include "nubble/error.hpp"

namespace nubble {
namespace {

constexpr std::array<std::pair<ReportKind, std::string_view>, 8> kKindNames{{
    {ReportKind::Mismatch, "mismatch"},
    {ReportKind::Diagnostics, "diagnostics"},
    {ReportKind::Sweep, "sweep"},
    {ReportKind::Curve, "curve"},
    {ReportKind::Prompts, "prompts"},
    {ReportKind::BestMatch, "best_match"},
    {ReportKind::Prune, "prune"},
    {ReportKind::Interaction, "interaction"},
}};

void emit(const Json& v, std::string& out) {
  switch (v.type()) {
    case Json::value_t::object: {
      out += '{';
      bool first = true;
      // nlohmann::json objects are std::map-backed, so iteration is key-sorted.
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += Json(it.key()).dump();
        out += ':';
        emit(it.value(), out);
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        emit(v[i], out);
      }
      out += ']';
      break;
    }
    case Json::value_t::number_float:
      out += format_real(v.get<double>());
      break;
    default:
      out += v.dump();
  }
}

}  // namespace

std::string_view to_string(ReportKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

ReportKind report_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw FormatError("unknown report kind '" + std::string(name) + "'");
}

std::string format_real(double value) {
  if (!std::isfinite(value)) throw ValidationError("cannot serialize a non-finite real");
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.9g", value);
  std::string s(buf.data());
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string canonical_json(const Json& value) {
  std::string out;
  emit(value, out);
  out += '\n';
  return out;
}

std::string serialize(const Report& report) {
  Json doc = Json::object();
  doc["kind"] = std::string(to_string(report.kind));
  doc["payload"] = report.payload;
  doc["schema_version"] = report.schema_version;
  return canonical_json(doc);
}

Report parse_report(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("kind") || !doc.contains("payload") ||
      !doc.contains("schema_version"))
    throw FormatError("report must be an object with kind, payload and schema_version");
  if (!doc["kind"].is_string() || !doc["schema_version"].is_number_integer())
    throw FormatError("report kind must be a string and schema_version an integer");
  return {report_kind_from_string(doc["kind"].get<std::string>()), doc["payload"],
          doc["schema_version"].get<int>()};
}

}  // namespace nubble

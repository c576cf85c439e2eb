#include "neuronet/annotations.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>

#include "neuronet/errors.hpp"
#include "neuronet/stages.hpp"

namespace neuronet {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

bool parse_seconds(std::string_view s, double& out) {
  std::string t = trim(s);
  if (!t.empty() && t[0] == '+') t.erase(0, 1);
  if (t.empty()) return false;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

bool looks_like_stage(const std::string& text) {
  const std::string u = upper(trim(text));
  return u.rfind("SLEEP STAGE", 0) == 0 || u.rfind("MOVEMENT", 0) == 0;
}

}  // namespace

std::string canonical_stage_token(std::string_view raw) {
  std::string u = upper(trim(raw));
  if (u.rfind("SLEEP STAGE", 0) == 0) u = trim(u.substr(11));
  if (u == "W" || u == "WAKE" || u == "0") return "W";
  if (u == "N1" || u == "1" || u == "S1") return "N1";
  if (u == "N2" || u == "2" || u == "S2") return "N2";
  if (u == "N3" || u == "3" || u == "S3") return "N3";
  if (u == "N4" || u == "4" || u == "S4") return "N4";
  if (u == "REM" || u == "R") return "REM";
  if (u == "M" || u == "MT") return "M";
  if (u == "?") return "?";
  if (u == "MOVEMENT" || u == "MOVEMENT TIME") return "Movement";
  if (u == "UNKNOWN" || u == "UNSCORED") return "Unknown";
  throw UnknownStage(std::string(raw));
}

std::optional<Stage> map_stage_token(std::string_view c) {
  if (c == "W") return Stage::W;
  if (c == "N1") return Stage::N1;
  if (c == "N2") return Stage::N2;
  if (c == "N3" || c == "N4") return Stage::N3;
  if (c == "REM") return Stage::REM;
  if (c == "M" || c == "?" || c == "Movement" || c == "Unknown") return std::nullopt;
  throw UnknownStage(std::string(c));
}

std::optional<Stage> parse_stage_name(std::string_view name) {
  for (auto s : kAllStages)
    if (name == stage_name(s)) return s;
  return std::nullopt;
}

std::vector<StageAnnotation> read_csv_annotations(std::istream& in) {
  std::vector<StageAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto comma = t.find(',');
    if (comma == std::string::npos) throw ConfigError("annotation line " + std::to_string(line_no) + ": expected onset_sec,stage");
    double onset = 0.0;
    if (!parse_seconds(t.substr(0, comma), onset)) {
      if (out.empty() && line_no == 1) continue;  // header row
      throw ConfigError("annotation line " + std::to_string(line_no) + ": bad onset");
    }
    out.push_back({onset, std::numeric_limits<double>::quiet_NaN(), canonical_stage_token(t.substr(comma + 1))});
  }
  return out;
}

std::vector<StageAnnotation> read_csv_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv_annotations(in);
}

std::vector<Tal> parse_tals(const std::vector<std::uint8_t>& bytes) {
  std::vector<Tal> out;
  std::size_t i = 0;
  while (i < bytes.size()) {
    if (bytes[i] == 0) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < bytes.size() && bytes[end] != 0) ++end;
    const std::string tal(reinterpret_cast<const char*>(bytes.data() + i), end - i);
    i = end;
    const auto first20 = tal.find('\x14');
    if (first20 == std::string::npos) continue;
    const std::string stamp = tal.substr(0, first20);
    Tal t;
    const auto dur_sep = stamp.find('\x15');
    if (!parse_seconds(stamp.substr(0, dur_sep), t.onset)) continue;
    if (dur_sep != std::string::npos) {
      double d = 0.0;
      if (parse_seconds(stamp.substr(dur_sep + 1), d)) t.duration = d;
    }
    std::size_t p = first20 + 1;
    while (p < tal.size()) {
      const auto q = tal.find('\x14', p);
      const std::string text = tal.substr(p, q == std::string::npos ? std::string::npos : q - p);
      if (!text.empty()) t.texts.push_back(text);
      if (q == std::string::npos) break;
      p = q + 1;
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<StageAnnotation> read_tal_annotations(const edf::EdfFile& file) {
  std::vector<StageAnnotation> out;
  for (std::size_t s = 0; s < file.header.signals.size(); ++s) {
    if (!file.header.signals[s].is_annotation()) continue;
    const auto bytes = edf::signal_bytes(file.digital[s]);
    // Each data record holds its own TAL block; TALs never span records.
    const std::size_t per_record = 2 * static_cast<std::size_t>(file.header.signals[s].samples_per_record);
    for (std::size_t off = 0; off < bytes.size(); off += per_record) {
      std::vector<std::uint8_t> rec(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(std::min(bytes.size(), off + per_record)));
      for (const auto& tal : parse_tals(rec))
        for (const auto& text : tal.texts)
          if (looks_like_stage(text)) out.push_back({tal.onset, tal.duration, canonical_stage_token(text)});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const StageAnnotation& a, const StageAnnotation& b) { return a.onset < b.onset; });
  return out;
}

namespace {

// Annotations with open durations extend to the next strictly later onset.
std::vector<std::pair<double, double>> intervals(const std::vector<StageAnnotation>& ann, double open_end) {
  std::vector<std::pair<double, double>> iv(ann.size());
  for (std::size_t i = 0; i < ann.size(); ++i) {
    double end = open_end;
    if (!std::isnan(ann[i].duration)) {
      end = ann[i].onset + ann[i].duration;
    } else {
      for (const auto& other : ann)
        if (other.onset > ann[i].onset && other.onset < end) end = other.onset;
    }
    iv[i] = {ann[i].onset, end};
  }
  return iv;
}

}  // namespace

double annotation_coverage_end(const std::vector<StageAnnotation>& ann, double epoch_seconds) {
  double end = 0.0;
  for (const auto& a : ann) {
    const double e = std::isnan(a.duration) ? a.onset + epoch_seconds : a.onset + a.duration;
    end = std::max(end, e);
  }
  return end;
}

std::vector<std::string> parse_stage_annotations(const std::vector<StageAnnotation>& ann,
                                                 double span_seconds, double epoch_seconds) {
  if (!(epoch_seconds > 0.0)) throw ConfigError("epoch length must be positive");
  const auto n_epochs = static_cast<std::size_t>(std::floor(span_seconds / epoch_seconds + 1e-9));
  const auto iv = intervals(ann, std::max(span_seconds, annotation_coverage_end(ann, epoch_seconds)));
  std::vector<std::string> out(n_epochs);
  constexpr double tol = 1e-6;
  for (std::size_t e = 0; e < n_epochs; ++e) {
    const double t = static_cast<double>(e) * epoch_seconds;
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i < ann.size(); ++i) {
      if (iv[i].first <= t + tol && t + tol < iv[i].second) {
        if (best < 0 || ann[i].onset >= ann[static_cast<std::size_t>(best)].onset) best = static_cast<std::ptrdiff_t>(i);
      }
    }
    if (best < 0) {
      double next = span_seconds;
      for (const auto& a : ann)
        if (a.onset > t && a.onset < next) next = a.onset;
      throw CoverageGap(t, next);
    }
    out[e] = ann[static_cast<std::size_t>(best)].token;
  }
  return out;
}

}  // namespace neuronet

#include "neuronet/edf.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "neuronet/errors.hpp"

namespace neuronet::edf {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\0')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\0')) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Sequential reader over the header that reports truncation offsets.
class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::string_view take(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) throw ParseError(bytes_.size(), std::string("truncated ") + what);
    std::string_view v(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

double parse_double(std::string_view raw, const std::string& field) {
  const std::string s = trim(raw);
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) throw HeaderFieldError(field);
  return v;
}

long long parse_int(std::string_view raw, const std::string& field) {
  const std::string s = trim(raw);
  long long v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last) throw HeaderFieldError(field);
  return v;
}

void parse_triplet(std::string_view raw, const std::string& field, int& a, int& b, int& c) {
  const std::string s = trim(raw);
  if (s.size() != 8 || s[2] != '.' || s[5] != '.') throw HeaderFieldError(field);
  a = static_cast<int>(parse_int(s.substr(0, 2), field));
  b = static_cast<int>(parse_int(s.substr(3, 2), field));
  c = static_cast<int>(parse_int(s.substr(6, 2), field));
}

// Left-justified, blank-padded ASCII field of exactly `width` bytes.
void put_field(std::vector<std::uint8_t>& out, const std::string& s, std::size_t width) {
  std::string f = s.substr(0, width);
  f.resize(width, ' ');
  out.insert(out.end(), f.begin(), f.end());
}

// Shortest decimal representation that fits the 8-byte numeric fields.
std::string format_number(double v, std::size_t width) {
  char buf[64];
  if (v == std::floor(v) && std::fabs(v) < 1e7) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
    if (std::string(buf).size() <= width) return buf;
  }
  for (int prec = static_cast<int>(width); prec >= 1; --prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    std::string s = buf;
    if (s.size() <= width) return s;
  }
  throw HeaderFieldError("numeric value does not fit EDF field");
}

}  // namespace

std::int16_t SignalSpec::to_digital(double physical) const {
  const double d = std::round((physical - physical_min) / gain() + digital_min);
  const double c = std::clamp(d, static_cast<double>(digital_min), static_cast<double>(digital_max));
  return static_cast<std::int16_t>(c);
}

std::size_t RecordingHeader::record_bytes() const {
  std::size_t n = 0;
  for (const auto& s : signals) n += 2 * static_cast<std::size_t>(s.samples_per_record);
  return n;
}

std::size_t EdfFile::find_signal(const std::string& label) const {
  const std::string want = lower(trim(label));
  std::string available;
  for (std::size_t i = 0; i < header.signals.size(); ++i) {
    if (lower(trim(header.signals[i].label)) == want) return i;
    available += (available.empty() ? "" : ", ") + header.signals[i].label;
  }
  throw ConfigError("channel '" + label + "' not found; available: " + available);
}

EdfFile parse_edf(std::span<const std::uint8_t> bytes) {
  Cursor cur(bytes);
  EdfFile f;
  auto& h = f.header;
  h.version_tag = trim(cur.take(8, "version"));
  h.patient_id = trim(cur.take(80, "patient"));
  h.recording_id = trim(cur.take(80, "recording"));
  parse_triplet(cur.take(8, "startdate"), "startdate", h.start.day, h.start.month, h.start.year);
  h.start.year += h.start.year >= 85 ? 1900 : 2000;
  parse_triplet(cur.take(8, "starttime"), "starttime", h.start.hour, h.start.minute, h.start.second);
  const long long header_bytes = parse_int(cur.take(8, "header bytes"), "header_bytes");
  h.reserved = trim(cur.take(44, "reserved"));
  h.num_data_records = parse_int(cur.take(8, "record count"), "num_data_records");
  h.record_duration = parse_double(cur.take(8, "record duration"), "record_duration");
  const long long ns = parse_int(cur.take(4, "signal count"), "num_signals");
  if (ns < 1 || ns > 4096) throw HeaderFieldError("num_signals");
  if (header_bytes != 256 + 256 * ns) throw HeaderFieldError("header_bytes");
  if (!(h.record_duration > 0.0) && h.num_data_records > 0) throw HeaderFieldError("record_duration");

  const auto n = static_cast<std::size_t>(ns);
  h.signals.resize(n);
  for (auto& s : h.signals) s.label = trim(cur.take(16, "signal label"));
  for (auto& s : h.signals) s.transducer = trim(cur.take(80, "transducer"));
  for (auto& s : h.signals) s.physical_dimension = trim(cur.take(8, "physical dimension"));
  for (auto& s : h.signals) s.physical_min = parse_double(cur.take(8, "physical min"), "physical_min");
  for (auto& s : h.signals) s.physical_max = parse_double(cur.take(8, "physical max"), "physical_max");
  for (auto& s : h.signals)
    s.digital_min = static_cast<int>(parse_int(cur.take(8, "digital min"), "digital_min"));
  for (auto& s : h.signals)
    s.digital_max = static_cast<int>(parse_int(cur.take(8, "digital max"), "digital_max"));
  for (auto& s : h.signals) s.prefilter = trim(cur.take(80, "prefilter"));
  for (auto& s : h.signals)
    s.samples_per_record = static_cast<int>(parse_int(cur.take(8, "samples per record"), "samples_per_record"));
  for (auto& s : h.signals) s.reserved = trim(cur.take(32, "signal reserved"));

  for (const auto& s : h.signals) {
    if (s.digital_min == s.digital_max)
      throw DegenerateCalibration("signal '" + s.label + "' has digital_min == digital_max");
    if (s.physical_min == s.physical_max)
      throw DegenerateCalibration("signal '" + s.label + "' has physical_min == physical_max");
    if (s.digital_min > s.digital_max) throw HeaderFieldError("digital_min");
    if (s.digital_min < -32768 || s.digital_max > 32767) throw HeaderFieldError("digital_max");
    if (s.samples_per_record < 1) throw HeaderFieldError("samples_per_record");
  }

  const std::size_t rec_bytes = h.record_bytes();
  const std::size_t body = bytes.size() - cur.pos();
  if (h.num_data_records < 0) {
    // -1 marks a recording whose length was never finalised; infer it.
    h.num_data_records = static_cast<std::int64_t>(body / rec_bytes);
  }
  const auto records = static_cast<std::size_t>(h.num_data_records);
  const std::size_t need = records * rec_bytes;
  if (body < need) throw ParseError(bytes.size(), "truncated data record");

  f.digital.resize(n);
  f.physical.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto spr = static_cast<std::size_t>(h.signals[i].samples_per_record);
    f.digital[i].resize(records * spr);
    f.physical[i].resize(records * spr);
  }
  const std::uint8_t* p = bytes.data() + cur.pos();
  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto spr = static_cast<std::size_t>(h.signals[i].samples_per_record);
      auto* dst = f.digital[i].data() + r * spr;
      for (std::size_t k = 0; k < spr; ++k, p += 2)
        dst[k] = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = h.signals[i];
    auto& phys = f.physical[i];
    const auto& dig = f.digital[i];
    for (std::size_t k = 0; k < dig.size(); ++k) phys[k] = s.to_physical(dig[k]);
  }
  return f;
}

EdfFile read_edf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_edf(bytes);
}

std::vector<std::uint8_t> write_edf(const RecordingHeader& h,
                                    const std::vector<std::vector<std::int16_t>>& digital) {
  if (digital.size() != h.signals.size()) throw ShapeError("write_edf: one sample array per signal required");
  const auto records = static_cast<std::size_t>(std::max<std::int64_t>(h.num_data_records, 0));
  for (std::size_t i = 0; i < h.signals.size(); ++i)
    if (digital[i].size() != records * static_cast<std::size_t>(h.signals[i].samples_per_record))
      throw ShapeError("write_edf: signal '" + h.signals[i].label + "' has wrong sample count");

  std::vector<std::uint8_t> out;
  out.reserve(h.header_bytes() + records * h.record_bytes());
  char buf[32];
  put_field(out, h.version_tag, 8);
  put_field(out, h.patient_id, 80);
  put_field(out, h.recording_id, 80);
  std::snprintf(buf, sizeof buf, "%02d.%02d.%02d", h.start.day, h.start.month, h.start.year % 100);
  put_field(out, buf, 8);
  std::snprintf(buf, sizeof buf, "%02d.%02d.%02d", h.start.hour, h.start.minute, h.start.second);
  put_field(out, buf, 8);
  put_field(out, std::to_string(h.header_bytes()), 8);
  put_field(out, h.reserved, 44);
  put_field(out, std::to_string(h.num_data_records), 8);
  put_field(out, format_number(h.record_duration, 8), 8);
  put_field(out, std::to_string(h.signals.size()), 4);
  for (const auto& s : h.signals) put_field(out, s.label, 16);
  for (const auto& s : h.signals) put_field(out, s.transducer, 80);
  for (const auto& s : h.signals) put_field(out, s.physical_dimension, 8);
  for (const auto& s : h.signals) put_field(out, format_number(s.physical_min, 8), 8);
  for (const auto& s : h.signals) put_field(out, format_number(s.physical_max, 8), 8);
  for (const auto& s : h.signals) put_field(out, std::to_string(s.digital_min), 8);
  for (const auto& s : h.signals) put_field(out, std::to_string(s.digital_max), 8);
  for (const auto& s : h.signals) put_field(out, s.prefilter, 80);
  for (const auto& s : h.signals) put_field(out, std::to_string(s.samples_per_record), 8);
  for (const auto& s : h.signals) put_field(out, s.reserved, 32);

  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t i = 0; i < h.signals.size(); ++i) {
      const auto spr = static_cast<std::size_t>(h.signals[i].samples_per_record);
      for (std::size_t k = 0; k < spr; ++k) {
        const auto u = static_cast<std::uint16_t>(digital[i][r * spr + k]);
        out.push_back(static_cast<std::uint8_t>(u & 0xff));
        out.push_back(static_cast<std::uint8_t>(u >> 8));
      }
    }
  }
  return out;
}

void write_edf_file(const std::filesystem::path& path, const RecordingHeader& header,
                    const std::vector<std::vector<std::int16_t>>& digital) {
  const auto bytes = write_edf(header, digital);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::uint8_t> signal_bytes(const std::vector<std::int16_t>& samples) {
  std::vector<std::uint8_t> out;
  out.reserve(samples.size() * 2);
  for (auto s : samples) {
    const auto u = static_cast<std::uint16_t>(s);
    out.push_back(static_cast<std::uint8_t>(u & 0xff));
    out.push_back(static_cast<std::uint8_t>(u >> 8));
  }
  return out;
}

std::vector<std::int16_t> bytes_to_samples(std::span<const std::uint8_t> bytes) {
  std::vector<std::int16_t> out((bytes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto u = static_cast<std::uint16_t>(out[i / 2]);
    u |= static_cast<std::uint16_t>(bytes[i]) << (8 * (i % 2));
    out[i / 2] = static_cast<std::int16_t>(u);
  }
  return out;
}

}  // namespace neuronet::edf

/*
 * Copyright 2026 The neoseize Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Multichannel EEG records, seizure annotations and their per-epoch masks.
//
// NEEG binary layout (all integers little-endian):
//   "NEEG" u16 version=1 u16 n_channels f32 sample_rate u64 n_samples
//   n_channels x (u16 length, UTF-8 name)
//   samples, channel-major, f32 microvolts
//
// Annotation CSV: header `onset_s,offset_s,channel`, channel blank for weak
// events. Debug CSV records: `# subject_id=ID sample_rate=HZ`, a header row of
// channel names, then one row per sample.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neoseize/binary_io.hpp"
#include "neoseize/keyvalue.hpp"
#include "neoseize/tensor.hpp"

namespace neoseize {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EegRecord {
  std::string subject_id;
  double sample_rate = 0.0;
  std::vector<std::string> channel_names;
  Tensor<double> samples;  // [n_channels, n_samples], microvolts

  std::size_t n_channels() const { return samples.rank() ? samples.dim(0) : 0; }
  std::size_t n_samples() const { return samples.rank() ? samples.dim(1) : 0; }
  double duration() const { return static_cast<double>(n_samples()) / sample_rate; }

  std::span<const double> channel(std::size_t c) const {
    return samples.data().subspan(c * n_samples(), n_samples());
  }
  std::span<double> channel(std::size_t c) {
    return samples.data().subspan(c * n_samples(), n_samples());
  }

  void validate() const {
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
      throw DataError("record '" + subject_id + "': sample_rate must be positive");
    }
    if (samples.rank() != 2) {
      throw DataError("record '" + subject_id + "': samples must be a matrix");
    }
    if (channel_names.size() != n_channels()) {
      throw DataError("record '" + subject_id + "': " +
                      std::to_string(channel_names.size()) + " names for " +
                      std::to_string(n_channels()) + " channels");
    }
    for (std::size_t c = 0; c < n_channels(); ++c) {
      const auto row = channel(c);
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (!std::isfinite(row[i])) {
          throw DataError("record '" + subject_id + "': non-finite sample at (" +
                          std::to_string(c) + "," + std::to_string(i) + ")");
        }
      }
    }
  }

  bool operator==(const EegRecord&) const = default;
};

struct SeizureEvent {
  double onset = 0.0;
  double offset = 0.0;
  std::optional<std::size_t> channel;  // empty: weak event

  bool weak() const { return !channel.has_value(); }
  bool contains(const SeizureEvent& o) const {
    return onset <= o.onset && o.offset <= offset;
  }
  bool operator==(const SeizureEvent&) const = default;
};

enum class Completeness { WeakOnly, WeakPartialStrong };

struct AnnotationSet {
  std::string subject_id;
  std::vector<SeizureEvent> events;
  Completeness completeness = Completeness::WeakOnly;

  std::vector<SeizureEvent> weak_events() const {
    std::vector<SeizureEvent> out;
    for (const auto& e : events) {
      if (e.weak()) out.push_back(e);
    }
    return out;
  }
  std::vector<SeizureEvent> strong_events() const {
    std::vector<SeizureEvent> out;
    for (const auto& e : events) {
      if (!e.weak()) out.push_back(e);
    }
    return out;
  }

  /// Sorts events (onset, weak before strong, channel) and refreshes the
  /// completeness flag.
  void normalize() {
    std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
      if (a.onset != b.onset) return a.onset < b.onset;
      if (a.weak() != b.weak()) return a.weak();
      if (a.offset != b.offset) return a.offset > b.offset;
      return a.channel.value_or(0) < b.channel.value_or(0);
    });
    completeness = std::any_of(events.begin(), events.end(),
                               [](const auto& e) { return !e.weak(); })
                       ? Completeness::WeakPartialStrong
                       : Completeness::WeakOnly;
  }

  /// Checks interval sanity, channel range (when n_channels > 0), duration
  /// bound (when duration > 0) and strong-inside-weak containment.
  void validate(std::size_t n_channels = 0, double duration = 0.0) const {
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto& e = events[i];
      const std::string where = "annotation " + std::to_string(i + 1) + " of '" +
                                subject_id + "'";
      if (!(e.onset >= 0.0) || !(e.offset > e.onset)) {
        throw DataError(where + ": need 0 <= onset < offset");
      }
      if (duration > 0.0 && e.offset > duration + 1e-9) {
        throw DataError(where + ": offset beyond record duration");
      }
      if (e.channel && n_channels > 0 && *e.channel >= n_channels) {
        throw DataError(where + ": channel " + std::to_string(*e.channel) +
                        " out of range");
      }
      if (e.channel && std::none_of(events.begin(), events.end(), [&](const auto& w) {
            return w.weak() && w.contains(e);
          })) {
        throw DataError(where + ": strong event not inside any weak event");
      }
    }
    if (!std::is_sorted(events.begin(), events.end(),
                        [](const auto& a, const auto& b) { return a.onset < b.onset; })) {
      throw DataError("annotations of '" + subject_id + "' are not sorted by onset");
    }
  }

  bool operator==(const AnnotationSet&) const = default;
};

struct LabelMask {
  double epoch_period = 1.0;
  std::vector<std::uint8_t> weak;                               // [n_epochs]
  std::optional<std::vector<std::vector<std::uint8_t>>> strong;  // [ch][epoch]
};

namespace detail {

inline std::string stem_of(const std::filesystem::path& p) { return p.stem().string(); }

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.emplace_back(kv::trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) {
    throw DataError(where + ": expected a number, got '" + s + "'");
  }
  return v;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace detail

inline constexpr char kRecordMagic[4] = {'N', 'E', 'E', 'G'};
inline constexpr std::uint16_t kRecordVersion = 1;

/// Writes the NEEG binary format. Samples are stored as f32, so a record
/// whose values are f32-representable round-trips bit-exactly.
inline void write_record(const EegRecord& r, const std::filesystem::path& path) {
  r.validate();
  if (r.n_channels() > 0xffff) throw DataError("too many channels for NEEG");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os.write(kRecordMagic, 4);
  io::put_u16(os, kRecordVersion);
  io::put_u16(os, static_cast<std::uint16_t>(r.n_channels()));
  io::put_f32(os, static_cast<float>(r.sample_rate));
  io::put_u64(os, r.n_samples());
  for (const auto& name : r.channel_names) io::put_string16(os, name);
  std::vector<char> buf(r.samples.size() * 4);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(r.samples[i]));
    for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("write failed for '" + path.string() + "'");
}

/// Debug CSV: one column per channel.
inline void write_record_csv(const EegRecord& r, const std::filesystem::path& path) {
  r.validate();
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os << "# subject_id=" << r.subject_id << " sample_rate=" << kv::number(r.sample_rate)
     << "\n";
  for (std::size_t c = 0; c < r.n_channels(); ++c) {
    os << (c ? "," : "") << r.channel_names[c];
  }
  os << "\n";
  for (std::size_t i = 0; i < r.n_samples(); ++i) {
    for (std::size_t c = 0; c < r.n_channels(); ++c) {
      os << (c ? "," : "") << kv::number(r.samples.at(c, i));
    }
    os << "\n";
  }
}

namespace detail {

inline EegRecord load_record_binary(std::istream& is, const std::string& subject) {
  EegRecord r;
  r.subject_id = subject;
  if (io::get_bytes(is, 4, "magic") != std::string(kRecordMagic, 4)) {
    throw FormatError("not an NEEG file");
  }
  if (const auto v = io::get_u16(is, "version"); v != kRecordVersion) {
    throw FormatError("unsupported NEEG version " + std::to_string(v));
  }
  const std::size_t ch = io::get_u16(is, "channel count");
  r.sample_rate = io::get_f32(is, "sample rate");
  const std::uint64_t n = io::get_u64(is, "sample count");
  for (std::size_t c = 0; c < ch; ++c) r.channel_names.push_back(io::get_string16(is, "channel name"));
  if (ch && n > (std::uint64_t{1} << 40) / ch) throw FormatError("implausible sample count");
  const std::string payload = io::get_bytes(is, ch * n * 4, "samples");
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after samples (channel length mismatch)");
  }
  r.samples = Tensor<double>(Shape{ch, static_cast<std::size_t>(n)});
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[i * 4 + b])) << (8 * b);
    }
    r.samples[i] = std::bit_cast<float>(bits);
  }
  return r;
}

inline EegRecord load_record_csv(const std::string& text, const std::string& subject,
                                 const std::string& src) {
  EegRecord r;
  r.subject_id = subject;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<double>> rows;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = src + ":" + std::to_string(line_no);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (kv::trim(line).empty()) continue;
    if (line[0] == '#') {
      std::istringstream ws(line.substr(1));
      std::string tok;
      while (ws >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "sample_rate") r.sample_rate = parse_double(val, where);
        if (key == "subject_id") r.subject_id = val;
      }
      continue;
    }
    auto cells = split_csv(line);
    if (!have_header) {
      r.channel_names = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != r.channel_names.size()) {
      throw DataError(where + ": expected " + std::to_string(r.channel_names.size()) +
                      " columns, got " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      row.push_back(c == "nan" || c == "NaN" ? std::nan("") : parse_double(c, where));
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw FormatError(src + ": empty record file");
  if (!(r.sample_rate > 0.0)) throw FormatError(src + ": missing sample_rate comment");
  const std::size_t ch = r.channel_names.size();
  r.samples = Tensor<double>(Shape{ch, rows.size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < ch; ++c) r.samples.at(c, i) = rows[i][c];
  }
  return r;
}

}  // namespace detail

/// Loads an NEEG binary or debug CSV record; the subject id defaults to the
/// file stem.
inline EegRecord load_record(const std::filesystem::path& path) {
  const std::string text = detail::read_text(path);
  if (text.empty()) throw FormatError("'" + path.string() + "': empty file");
  EegRecord r;
  if (text.size() >= 4 && text.compare(0, 4, kRecordMagic, 4) == 0) {
    std::istringstream is(text);
    try {
      r = detail::load_record_binary(is, detail::stem_of(path));
    } catch (const FormatError& e) {
      throw FormatError("'" + path.string() + "': " + e.what());
    }
  } else {
    r = detail::load_record_csv(text, detail::stem_of(path), path.string());
  }
  r.validate();
  return r;
}

inline void write_annotations(const AnnotationSet& a, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os << "onset_s,offset_s,channel\n";
  for (const auto& e : a.events) {
    os << kv::number(e.onset) << "," << kv::number(e.offset) << ",";
    if (e.channel) os << *e.channel;
    os << "\n";
  }
}

inline AnnotationSet parse_annotations(const std::string& text, const std::string& subject,
                                       const std::string& src, std::size_t n_channels = 0,
                                       double duration = 0.0) {
  AnnotationSet a;
  a.subject_id = subject;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = src + ":" + std::to_string(line_no);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (kv::trim(line).empty()) continue;
    if (line_no == 1 && line.rfind("onset", 0) == 0) continue;
    auto cells = detail::split_csv(line);
    if (cells.size() == 2) cells.emplace_back();
    if (cells.size() != 3) throw DataError(where + ": expected onset_s,offset_s,channel");
    SeizureEvent e;
    e.onset = detail::parse_double(cells[0], where);
    e.offset = detail::parse_double(cells[1], where);
    if (!(e.offset > e.onset)) throw DataError(where + ": offset must exceed onset");
    if (!cells[2].empty()) {
      e.channel = static_cast<std::size_t>(kv::to_u64("channel", cells[2]));
    }
    a.events.push_back(e);
  }
  a.normalize();
  a.validate(n_channels, duration);
  return a;
}

inline AnnotationSet load_annotations(const std::filesystem::path& path,
                                      std::size_t n_channels = 0, double duration = 0.0) {
  return parse_annotations(detail::read_text(path), detail::stem_of(path), path.string(),
                           n_channels, duration);
}

namespace detail {

inline void rasterize_event(std::vector<std::uint8_t>& row, const SeizureEvent& e,
                            double period) {
  const std::size_t n = row.size();
  const double end = static_cast<double>(n) * period;
  const double on = std::max(0.0, e.onset), off = std::min(end, e.offset);
  if (!(off > on)) return;
  const auto first = static_cast<std::size_t>(std::floor(on / period));
  const auto last = std::min(n, static_cast<std::size_t>(std::ceil(off / period)) + 1);
  const double need = 0.5 * period * (1.0 - 1e-9);
  for (std::size_t k = first; k < last; ++k) {
    const double lo = static_cast<double>(k) * period, hi = lo + period;
    if (std::min(off, hi) - std::max(on, lo) >= need) row[k] = 1;
  }
}

}  // namespace detail

/// Epoch k spans [k*P, (k+1)*P) and is marked when an event covers at least
/// half of it. Strong rows use the same rule per channel.
inline LabelMask rasterize(const AnnotationSet& a, double epoch_period, std::size_t n_epochs,
                           std::size_t n_channels) {
  if (!(epoch_period > 0.0)) throw DataError("epoch_period must be positive");
  LabelMask m;
  m.epoch_period = epoch_period;
  m.weak.assign(n_epochs, 0);
  bool any_strong = false;
  std::vector<std::vector<std::uint8_t>> strong(n_channels,
                                                std::vector<std::uint8_t>(n_epochs, 0));
  for (const auto& e : a.events) {
    if (e.weak()) {
      detail::rasterize_event(m.weak, e, epoch_period);
    } else if (*e.channel < n_channels) {
      any_strong = true;
      detail::rasterize_event(strong[*e.channel], e, epoch_period);
    }
  }
  if (any_strong || a.completeness == Completeness::WeakPartialStrong) {
    m.strong = std::move(strong);
  }
  return m;
}

}  // namespace neoseize

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "flowdet/common.hpp"
#include "flowdet/imu.hpp"
#include "flowdet/session.hpp"

namespace flowdet {

/// Per-channel scaling intervals.
struct ChannelRanges {
  std::array<Bounds, kNumChannels> r;

  static ChannelRanges table() {
    ChannelRanges cr;
    cr.r = kObservedRanges;
    return cr;
  }

  /// Data-derived ranges (per-session mode).
  static ChannelRanges from_samples(const std::vector<ImuSample>& samples) {
    if (samples.empty()) throw InsufficientDataError("no samples to derive ranges from");
    ChannelRanges cr;
    for (int c = 0; c < kNumChannels; ++c) {
      double lo = samples[0].ch[c], hi = samples[0].ch[c];
      for (const auto& s : samples) {
        lo = std::min(lo, s.ch[c]);
        hi = std::max(hi, s.ch[c]);
      }
      if (lo == hi) hi = lo + 1.0;  // constant channel: avoid a degenerate interval
      cr.r[c] = {lo, hi};
    }
    return cr;
  }

  void validate() const {
    for (int c = 0; c < kNumChannels; ++c) {
      if (!(r[c].lo < r[c].hi)) {
        throw ConfigError(cat("range for ", kChannelNames[c], " must satisfy min < max"));
      }
    }
  }
};

inline constexpr int kWindowLen = 10;

/// Classifier input unit: 10 timesteps x 12 channels, entries in [-1, 1].
struct Window {
  std::array<double, kWindowLen * kNumChannels> values{};
  int label = -1;
  std::int64_t t_end_ds = 0;

  double at(int t, int c) const { return values[static_cast<std::size_t>(t) * kNumChannels + c]; }
  bool operator==(const Window&) const = default;
};

/// Drops rows repeating an already-seen timestamp (first row wins).
inline std::vector<ImuSample> dedup(const std::vector<ImuSample>& samples) {
  std::vector<ImuSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (!out.empty() && s.t_ds == out.back().t_ds) continue;
    if (!out.empty() && s.t_ds < out.back().t_ds) {
      throw OrderingError(cat("timestamp ", s.t_ds, " goes backwards after ", out.back().t_ds));
    }
    out.push_back(s);
  }
  return out;
}

/// Trailing moving average per channel, stride 1, valid mode: output length
/// N - w + 1, each output stamped with its window's last timestamp.
inline std::vector<ImuSample> smooth(const std::vector<ImuSample>& samples, int w = 5) {
  if (w < 1) throw ConfigError("smoothing window must be >= 1");
  const std::size_t n = samples.size();
  if (n < static_cast<std::size_t>(w)) {
    throw InsufficientDataError(cat("need at least ", w, " samples to smooth, got ", n));
  }
  std::vector<ImuSample> out(n - w + 1);
  std::array<double, kNumChannels> acc{};
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < kNumChannels; ++c) acc[c] += samples[i].ch[c];
    if (i + 1 >= static_cast<std::size_t>(w)) {
      std::size_t o = i + 1 - w;
      out[o].t_ds = samples[i].t_ds;
      for (int c = 0; c < kNumChannels; ++c) out[o].ch[c] = acc[c] / w;
      for (int c = 0; c < kNumChannels; ++c) acc[c] -= samples[o].ch[c];
    }
  }
  return out;
}

struct ScaleReport {
  std::int64_t clamped = 0;
  std::array<std::int64_t, kNumChannels> per_channel{};
};

/// Affine map per channel: x -> 2(x - min)/(max - min) - 1, clamped to [-1, 1].
inline std::vector<ImuSample> scale(const std::vector<ImuSample>& samples,
                                    const ChannelRanges& ranges, ScaleReport* report = nullptr) {
  ranges.validate();
  std::vector<ImuSample> out = samples;
  for (auto& s : out) {
    for (int c = 0; c < kNumChannels; ++c) {
      const Bounds& b = ranges.r[c];
      double v = 2.0 * (s.ch[c] - b.lo) / (b.hi - b.lo) - 1.0;
      if (v < -1.0 || v > 1.0) {
        v = std::clamp(v, -1.0, 1.0);
        if (report) {
          ++report->clamped;
          ++report->per_channel[c];
        }
      }
      s.ch[c] = v;
    }
  }
  return out;
}

/// Inverse of scale on non-clamped values.
inline double unscale_value(double v, const Bounds& b) {
  return (v + 1.0) * 0.5 * (b.hi - b.lo) + b.lo;
}

/// Overlapping windows, label taken from the track at each window's last
/// timestep. Count = (N - len)/stride + 1.
inline std::vector<Window> make_windows(const Session& session, int len = kWindowLen,
                                        int stride = 1) {
  if (len != kWindowLen) throw ConfigError(cat("window length must be ", kWindowLen));
  if (stride < 1) throw ConfigError("stride must be >= 1");
  const auto& samples = session.samples;
  if (samples.size() < static_cast<std::size_t>(len)) {
    throw InsufficientDataError(cat("need at least ", len, " samples for a window, got ",
                                    samples.size()));
  }
  std::vector<Window> out;
  out.reserve((samples.size() - len) / stride + 1);
  for (std::size_t start = 0; start + len <= samples.size(); start += stride) {
    Window w;
    for (int t = 0; t < len; ++t) {
      for (int c = 0; c < kNumChannels; ++c) {
        w.values[static_cast<std::size_t>(t) * kNumChannels + c] = samples[start + t].ch[c];
      }
    }
    w.t_end_ds = samples[start + len - 1].t_ds;
    w.label = session.labels.at(w.t_end_ds);
    out.push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Window file format: CSV, one row = 120 values, label, t_end_ds.

inline void write_windows_csv(const std::vector<Window>& windows, std::ostream& out) {
  for (int i = 0; i < kWindowLen * kNumChannels; ++i) out << 'v' << i << ',';
  out << "label,t_end_ds\n";
  for (const auto& w : windows) {
    for (const auto& v : w.values) out << detail::format_double(v) << ',';
    out << w.label << ',' << w.t_end_ds << '\n';
  }
}

inline void write_windows_csv(const std::vector<Window>& windows,
                              const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError(cat("cannot write ", path.string()));
  write_windows_csv(windows, f);
}

inline std::vector<Window> read_windows_csv(std::istream& in) {
  std::vector<Window> out;
  std::string line;
  std::int64_t line_no = 0;
  constexpr int kFields = kWindowLen * kNumChannels + 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("v0,", 0) == 0) continue;
    auto fields = detail::split_fields(line);
    if (fields.size() != kFields) {
      throw ParseError(cat("expected ", kFields, " fields, got ", fields.size(), " at line ",
                           line_no));
    }
    Window w;
    for (int i = 0; i < kWindowLen * kNumChannels; ++i) {
      w.values[i] = detail::parse_double(fields[i], line_no, i);
    }
    w.label = static_cast<int>(detail::parse_int(fields[kFields - 2], line_no, kFields - 2));
    if (w.label != 1 && w.label != -1) {
      throw ParseError(cat("label must be 1 or -1 at line ", line_no));
    }
    w.t_end_ds = detail::parse_int(fields[kFields - 1], line_no, kFields - 1);
    out.push_back(w);
  }
  return out;
}

inline std::vector<Window> read_windows_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(cat("cannot read ", path.string()));
  return read_windows_csv(f);
}

}  // namespace flowdet

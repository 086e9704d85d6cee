#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowdet/common.hpp"
#include "flowdet/imu.hpp"

namespace flowdet {

enum class LabelSource { App, Manual };

/// One coach toggle: +1 = flow, -1 = fall.
struct LabelEvent {
  std::int64_t t_ds = 0;
  int state = +1;
  LabelSource source = LabelSource::App;

  bool operator==(const LabelEvent&) const = default;
};

/// Dense per-decisecond +-1 series over [start_ds, end_ds).
struct LabelTrack {
  std::int64_t start_ds = 0;
  std::int64_t end_ds = 0;
  std::vector<std::int8_t> values;

  std::int64_t length() const { return end_ds - start_ds; }
  int at(std::int64_t t_ds) const { return values.at(static_cast<std::size_t>(t_ds - start_ds)); }
  double flow_fraction() const {
    if (values.empty()) return 0.0;
    std::int64_t flow = 0;
    for (auto v : values) flow += (v > 0);
    return static_cast<double>(flow) / static_cast<double>(values.size());
  }
};

/// Sustained raised-hand interval, inclusive sample timestamps.
struct SyncMarker {
  std::int64_t start_ds = 0;
  std::int64_t end_ds = 0;
};

struct Session {
  std::string player_id;
  std::vector<ImuSample> samples;
  LabelTrack labels;
};

// ---------------------------------------------------------------------------
// Motion CSV

inline constexpr std::string_view kMotionCsvHeader =
    "t_ds,gx,gy,gz,ax,ay,az,rx,ry,rz,yaw,roll,pitch";

namespace detail {

inline double parse_double(std::string_view tok, std::int64_t line, int field) {
  double v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size()) {
    throw ParseError(cat("non-numeric field ", field + 1, " ('", std::string(tok),
                         "') at line ", line));
  }
  return v;
}

inline std::int64_t parse_int(std::string_view tok, std::int64_t line, int field) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size()) {
    throw ParseError(cat("non-integer field ", field + 1, " ('", std::string(tok),
                         "') at line ", line));
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Parses a motion stream (optional header row). Validates arity, numeric
/// fields, channel ranges, and strictly increasing timestamps.
inline std::vector<ImuSample> parse_motion_csv(std::istream& in) {
  std::vector<ImuSample> out;
  std::string line;
  std::int64_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line == kMotionCsvHeader) continue;
    }
    if (line.empty()) continue;
    auto fields = detail::split_fields(line);
    if (fields.size() != 1 + kNumChannels) {
      throw ParseError(cat("expected ", 1 + kNumChannels, " fields, got ", fields.size(),
                           " at line ", line_no));
    }
    ImuSample s;
    s.t_ds = detail::parse_int(fields[0], line_no, 0);
    for (int c = 0; c < kNumChannels; ++c) {
      s.ch[c] = detail::parse_double(fields[c + 1], line_no, c + 1);
    }
    validate_sample(s, line_no);
    if (!out.empty() && s.t_ds <= out.back().t_ds) {
      throw OrderingError(cat("non-increasing timestamp ", s.t_ds, " after ", out.back().t_ds,
                              " at line ", line_no));
    }
    out.push_back(s);
  }
  return out;
}

inline void serialize_motion_csv(const std::vector<ImuSample>& samples, std::ostream& out,
                                 bool header = true) {
  if (header) out << kMotionCsvHeader << '\n';
  for (const auto& s : samples) {
    out << s.t_ds;
    for (int c = 0; c < kNumChannels; ++c) out << ',' << detail::format_double(s.ch[c]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Label capture

struct KeyPress {
  double t_s = 0;  // wall-clock seconds
  int state = +1;  // +1 flow key, -1 fall key
};

struct CaptureResult {
  std::vector<LabelEvent> events;
  int clamped = 0;  // presses before the clock origin, clamped to 0
};

/// Converts keypress times to deciseconds relative to clock_origin_ds and
/// collapses repeated same-state presses to the first.
inline CaptureResult capture_labels(std::vector<KeyPress> presses, std::int64_t clock_origin_ds,
                                    LabelSource source = LabelSource::App) {
  std::stable_sort(presses.begin(), presses.end(),
                   [](const KeyPress& a, const KeyPress& b) { return a.t_s < b.t_s; });
  CaptureResult res;
  for (const auto& p : presses) {
    std::int64_t t = std::llround(p.t_s * 10.0) - clock_origin_ds;
    if (t < 0) {
      t = 0;
      ++res.clamped;
    }
    if (!res.events.empty() && res.events.back().state == p.state) continue;
    res.events.push_back({t, p.state, source});
  }
  return res;
}

// ---------------------------------------------------------------------------
// Label reconciliation

struct ReconcileFlag {
  enum class Kind { MissingInApp, MissingInManual, Conflict };
  Kind kind;
  std::optional<LabelEvent> app;
  std::optional<LabelEvent> manual;
};

struct ReconcileResult {
  std::vector<LabelEvent> merged;
  std::vector<ReconcileFlag> flags;

  std::size_t conflict_count() const {
    std::size_t n = 0;
    for (const auto& f : flags) n += (f.kind == ReconcileFlag::Kind::Conflict);
    return n;
  }
};

/// Matches app and manual label streams. Same-state events within tol_ds
/// merge to the app timestamp; contradictions within tol_ds keep the app
/// event and are flagged; unmatched events are kept and flagged.
inline ReconcileResult reconcile_labels(const std::vector<LabelEvent>& app,
                                        const std::vector<LabelEvent>& manual,
                                        std::int64_t tol_ds = 20) {
  std::vector<bool> app_done(app.size(), false), man_done(manual.size(), false);
  ReconcileResult res;

  // Pass 1: same-state matches (earliest unmatched candidate in time order).
  for (std::size_t i = 0; i < app.size(); ++i) {
    for (std::size_t j = 0; j < manual.size(); ++j) {
      if (man_done[j] || manual[j].state != app[i].state) continue;
      if (manual[j].t_ds < app[i].t_ds - tol_ds) continue;
      if (manual[j].t_ds > app[i].t_ds + tol_ds) break;
      app_done[i] = man_done[j] = true;
      break;
    }
  }
  // Pass 2: remaining opposite-state pairs within tolerance are conflicts.
  for (std::size_t i = 0; i < app.size(); ++i) {
    if (app_done[i]) continue;
    for (std::size_t j = 0; j < manual.size(); ++j) {
      if (man_done[j] || manual[j].state == app[i].state) continue;
      if (manual[j].t_ds < app[i].t_ds - tol_ds) continue;
      if (manual[j].t_ds > app[i].t_ds + tol_ds) break;
      app_done[i] = man_done[j] = true;
      res.flags.push_back({ReconcileFlag::Kind::Conflict, app[i], manual[j]});
      break;
    }
  }
  for (const auto& e : app) res.merged.push_back(e);
  for (std::size_t i = 0; i < app.size(); ++i) {
    if (!app_done[i]) {
      res.flags.push_back({ReconcileFlag::Kind::MissingInManual, app[i], std::nullopt});
    }
  }
  for (std::size_t j = 0; j < manual.size(); ++j) {
    if (!man_done[j]) {
      bool conflicted = false;
      for (const auto& f : res.flags) {
        if (f.kind == ReconcileFlag::Kind::Conflict && f.manual && *f.manual == manual[j]) {
          conflicted = true;
        }
      }
      if (!conflicted) {
        res.flags.push_back({ReconcileFlag::Kind::MissingInApp, std::nullopt, manual[j]});
        res.merged.push_back(manual[j]);
      }
    }
  }
  std::stable_sort(res.merged.begin(), res.merged.end(),
                   [](const LabelEvent& a, const LabelEvent& b) { return a.t_ds < b.t_ds; });
  return res;
}

// ---------------------------------------------------------------------------
// Sync marker detection

struct SyncDetectOptions {
  std::array<double, 3> ref_dir = {0.0, -1.0, 0.0};  // raised-hand gravity, watch frame
  double angle_tol_deg = 20.0;
  std::int64_t min_dwell_ds = 25;
};

/// Maximal intervals where gravity stays within the angular tolerance of the
/// raised-hand direction for at least min_dwell_ds. Uses gravity channels only.
inline std::vector<SyncMarker> detect_sync_markers(const std::vector<ImuSample>& samples,
                                                   const SyncDetectOptions& opts = {},
                                                   std::size_t min_markers = 2) {
  if (samples.empty()) throw InsufficientDataError("no samples for marker detection");
  const double cos_tol = std::cos(opts.angle_tol_deg * kPi / 180.0);
  const double rn = std::sqrt(opts.ref_dir[0] * opts.ref_dir[0] +
                              opts.ref_dir[1] * opts.ref_dir[1] +
                              opts.ref_dir[2] * opts.ref_dir[2]);
  std::vector<SyncMarker> markers;
  bool in_run = false;
  std::int64_t run_start = 0, run_end = 0;
  auto close_run = [&] {
    if (in_run && run_end - run_start >= opts.min_dwell_ds) markers.push_back({run_start, run_end});
    in_run = false;
  };
  for (const auto& s : samples) {
    double gx = s.ch[kGX], gy = s.ch[kGY], gz = s.ch[kGZ];
    double gn = std::sqrt(gx * gx + gy * gy + gz * gz);
    double c = (gn > 0 && rn > 0)
                   ? (gx * opts.ref_dir[0] + gy * opts.ref_dir[1] + gz * opts.ref_dir[2]) / (gn * rn)
                   : -1.0;
    bool raised = c >= cos_tol;
    if (raised && in_run && s.t_ds == run_end + 1) {
      run_end = s.t_ds;
    } else if (raised) {
      close_run();
      in_run = true;
      run_start = run_end = s.t_ds;
    } else {
      close_run();
    }
  }
  close_run();
  if (markers.size() < min_markers) {
    throw InsufficientMarkersError(cat("found ", markers.size(), " sync markers, need ",
                                       min_markers));
  }
  return markers;
}

// ---------------------------------------------------------------------------
// Session alignment

struct GapReport {
  std::int64_t after_t_ds;
  std::int64_t missing_ds;
};

struct AlignOptions {
  std::int64_t max_gap_ds = 5;
  bool allow_large_gaps = false;
};

struct AlignResult {
  Session session;
  std::vector<GapReport> gaps;
  bool coverage_warning = false;  // no event fell inside the sample span
};

/// Shifts the label clock so its origin lands on the first marker start, then
/// expands events to a dense step-function track clipped to the sample span.
inline AlignResult align_session(std::string player_id, std::vector<ImuSample> samples,
                                 std::vector<LabelEvent> events,
                                 const std::vector<SyncMarker>& markers, int initial_state,
                                 const AlignOptions& opts = {}) {
  if (markers.empty()) throw AlignmentError("no sync markers; cannot align label clock");
  if (samples.empty()) throw InsufficientDataError("no samples to align");
  AlignResult res;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    std::int64_t missing = samples[i].t_ds - samples[i - 1].t_ds - 1;
    if (missing > 0) {
      res.gaps.push_back({samples[i - 1].t_ds, missing});
      if (missing > opts.max_gap_ds && !opts.allow_large_gaps) {
        throw GapError(cat("gap of ", missing, " ds after t=", samples[i - 1].t_ds,
                           " exceeds ", opts.max_gap_ds, " ds"));
      }
    }
  }
  const std::int64_t shift = markers.front().start_ds;
  std::stable_sort(events.begin(), events.end(),
                   [](const LabelEvent& a, const LabelEvent& b) { return a.t_ds < b.t_ds; });

  LabelTrack track;
  track.start_ds = samples.front().t_ds;
  track.end_ds = samples.back().t_ds + 1;
  track.values.resize(static_cast<std::size_t>(track.length()));

  bool any_inside = false;
  std::size_t next_ev = 0;
  int state = initial_state;
  for (std::int64_t t = track.start_ds; t < track.end_ds; ++t) {
    while (next_ev < events.size() && events[next_ev].t_ds + shift <= t) {
      state = events[next_ev].state;
      ++next_ev;
    }
    track.values[static_cast<std::size_t>(t - track.start_ds)] = static_cast<std::int8_t>(state);
  }
  for (const auto& e : events) {
    std::int64_t t = e.t_ds + shift;
    if (t >= track.start_ds && t < track.end_ds) any_inside = true;
  }
  res.coverage_warning = !events.empty() && !any_inside;
  if (events.empty() || res.coverage_warning) {
    std::fill(track.values.begin(), track.values.end(), static_cast<std::int8_t>(initial_state));
  }
  res.session = Session{std::move(player_id), std::move(samples), std::move(track)};
  return res;
}

// ---------------------------------------------------------------------------
// Label event JSONL + session archive

inline void write_labels_jsonl(const std::vector<LabelEvent>& events, std::ostream& out) {
  for (const auto& e : events) {
    nlohmann::json j{{"t_ds", e.t_ds},
                     {"state", e.state},
                     {"source", e.source == LabelSource::App ? "app" : "manual"}};
    out << j.dump() << '\n';
  }
}

inline std::vector<LabelEvent> parse_labels_jsonl(std::istream& in) {
  std::vector<LabelEvent> events;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("t_ds") || !j.contains("state") || !j.contains("source")) {
      throw ParseError(cat("bad label event at line ", line_no));
    }
    int state = j["state"].get<int>();
    if (state != 1 && state != -1) {
      throw ParseError(cat("label state must be 1 or -1, got ", state, " at line ", line_no));
    }
    std::string src = j["source"].get<std::string>();
    if (src != "app" && src != "manual") {
      throw ParseError(cat("label source must be app or manual at line ", line_no));
    }
    events.push_back({j["t_ds"].get<std::int64_t>(), state,
                      src == "app" ? LabelSource::App : LabelSource::Manual});
  }
  return events;
}

/// On-disk session: motion.csv + labels.jsonl + session.json.
struct SessionArchive {
  std::string player_id;
  int initial_state = -1;
  std::vector<ImuSample> samples;
  std::vector<LabelEvent> events;
  std::vector<SyncMarker> markers;  // filled after ingest
};

inline void write_session_archive(const std::filesystem::path& dir, const SessionArchive& a) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "motion.csv");
    if (!f) throw IoError(cat("cannot write ", (dir / "motion.csv").string()));
    serialize_motion_csv(a.samples, f);
  }
  {
    std::ofstream f(dir / "labels.jsonl");
    if (!f) throw IoError(cat("cannot write ", (dir / "labels.jsonl").string()));
    write_labels_jsonl(a.events, f);
  }
  nlohmann::json meta{{"player_id", a.player_id}, {"initial_state", a.initial_state}};
  if (!a.markers.empty()) {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& mk : a.markers) m.push_back({mk.start_ds, mk.end_ds});
    meta["markers"] = m;
  }
  std::ofstream f(dir / "session.json");
  if (!f) throw IoError(cat("cannot write ", (dir / "session.json").string()));
  f << meta.dump(2) << '\n';
}

inline SessionArchive read_session_archive(const std::filesystem::path& dir) {
  SessionArchive a;
  std::ifstream meta_f(dir / "session.json");
  if (!meta_f) throw IoError(cat("missing ", (dir / "session.json").string()));
  nlohmann::json meta = nlohmann::json::parse(meta_f, nullptr, false);
  if (meta.is_discarded()) throw ParseError(cat("bad JSON in ", (dir / "session.json").string()));
  a.player_id = meta.value("player_id", "");
  a.initial_state = meta.value("initial_state", -1);
  if (meta.contains("markers")) {
    for (const auto& m : meta["markers"]) {
      a.markers.push_back({m.at(0).get<std::int64_t>(), m.at(1).get<std::int64_t>()});
    }
  }
  std::ifstream motion_f(dir / "motion.csv");
  if (!motion_f) throw IoError(cat("missing ", (dir / "motion.csv").string()));
  a.samples = parse_motion_csv(motion_f);
  std::ifstream labels_f(dir / "labels.jsonl");
  if (!labels_f) throw IoError(cat("missing ", (dir / "labels.jsonl").string()));
  a.events = parse_labels_jsonl(labels_f);
  return a;
}

}  // namespace flowdet

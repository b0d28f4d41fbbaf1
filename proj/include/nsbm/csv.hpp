#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nsbm/common.hpp"
#include "nsbm/trajectory.hpp"

namespace nsbm {

inline constexpr const char* kTrajectoryHeader =
    "sample_id,label,subject_id,t,vehicle_id,x,y,speed,accel,heading,lane,length,width";

namespace detail {

inline std::string fmt_double(double v, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const char* what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw data_error(std::string("bad ") + what + " value '" + s + "'");
  }
  return v;
}

inline int parse_int(const std::string& s, const char* what) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw data_error(std::string("bad ") + what + " value '" + s + "'");
  }
  return static_cast<int>(v);
}

}  // namespace detail

// Serialize samples as one row per vehicle per frame. Rows are ordered by
// sample (input order), then time, then vehicle id, so output is deterministic.
// `comment` (if non-empty) is written as a single leading '#' line.
inline std::string trajectories_to_csv(const std::vector<TrajectorySample>& samples,
                                       const std::string& comment = "") {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += kTrajectoryHeader;
  out += '\n';
  for (const TrajectorySample& s : samples) {
    const std::string label = to_string(s.label);
    for (const auto& [t_ds, frame] : s.frames) {
      std::vector<const VehicleState*> ordered;
      ordered.reserve(frame.size());
      for (const auto& v : frame) ordered.push_back(&v);
      std::sort(ordered.begin(), ordered.end(),
                [](const VehicleState* a, const VehicleState* b) { return a->id < b->id; });
      for (const VehicleState* v : ordered) {
        out += s.sample_id;
        out += ',';
        out += label;
        out += ',';
        out += std::to_string(s.subject_id);
        out += ',';
        out += detail::fmt_double(to_seconds(t_ds), 1);
        out += ',';
        out += std::to_string(v->id);
        out += ',';
        out += detail::fmt_double(v->x);
        out += ',';
        out += detail::fmt_double(v->y);
        out += ',';
        out += detail::fmt_double(v->speed);
        out += ',';
        out += detail::fmt_double(v->accel);
        out += ',';
        out += detail::fmt_double(v->heading);
        out += ',';
        out += std::to_string(v->lane);
        out += ',';
        out += detail::fmt_double(v->length);
        out += ',';
        out += detail::fmt_double(v->width);
        out += '\n';
      }
    }
  }
  return out;
}

// Parse the trajectory CSV format. '#' comment lines are skipped; the first
// data line must be the canonical header. Samples keep file order. Validates
// grid contiguity, subject presence in every frame, and that crash samples
// contain the t=0 collision frame.
inline std::vector<TrajectorySample> trajectories_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  std::vector<TrajectorySample> samples;
  std::map<std::string, std::size_t> index;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line != kTrajectoryHeader) {
        throw data_error("unexpected trajectory CSV header: '" + line + "'");
      }
      header_seen = true;
      continue;
    }
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 13) {
      throw data_error("line " + std::to_string(line_no) + ": expected 13 fields, got " +
                       std::to_string(fields.size()));
    }
    const std::string& sid = fields[0];
    auto [it, inserted] = index.try_emplace(sid, samples.size());
    if (inserted) {
      samples.emplace_back();
      samples.back().sample_id = sid;
      samples.back().label = label_from_string(fields[1]);
      samples.back().subject_id = detail::parse_int(fields[2], "subject_id");
    }
    TrajectorySample& s = samples[it->second];
    VehicleState v;
    const double t = detail::parse_double(fields[3], "t");
    std::int64_t t_ds;
    try {
      t_ds = to_ds(t);
    } catch (const std::invalid_argument& e) {
      throw data_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    v.t_ds = t_ds;
    v.id = detail::parse_int(fields[4], "vehicle_id");
    v.x = detail::parse_double(fields[5], "x");
    v.y = detail::parse_double(fields[6], "y");
    v.speed = detail::parse_double(fields[7], "speed");
    v.accel = detail::parse_double(fields[8], "accel");
    v.heading = detail::parse_double(fields[9], "heading");
    v.lane = detail::parse_int(fields[10], "lane");
    v.length = detail::parse_double(fields[11], "length");
    v.width = detail::parse_double(fields[12], "width");
    if (v.speed < 0.0) {
      throw data_error("line " + std::to_string(line_no) + ": negative speed");
    }
    if (v.lane < 1) {
      throw data_error("line " + std::to_string(line_no) + ": lane below 1");
    }
    s.frames[t_ds].push_back(v);
  }
  if (!header_seen) throw data_error("trajectory CSV has no header row");

  for (const TrajectorySample& s : samples) {
    if (s.frames.empty()) throw data_error("sample '" + s.sample_id + "' has no frames");
    std::int64_t expected = s.first_ds();
    for (const auto& [t_ds, frame] : s.frames) {
      if (t_ds != expected) {
        throw data_error("sample '" + s.sample_id + "' has a gap at t=" +
                         std::to_string(to_seconds(expected)));
      }
      ++expected;
      bool subject_found = false;
      for (const auto& v : frame) subject_found = subject_found || v.id == s.subject_id;
      if (!subject_found) {
        throw data_error("sample '" + s.sample_id + "' misses its subject at t=" +
                         std::to_string(to_seconds(t_ds)));
      }
    }
    if (s.label == Label::crash && s.frames.find(0) == s.frames.end()) {
      throw data_error("crash sample '" + s.sample_id + "' lacks the t=0 frame");
    }
  }
  return samples;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw data_error("cannot open '" + tmp + "' for writing");
    out << content;
    if (!out) throw data_error("failed writing '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw data_error("cannot move temporary file onto '" + path + "'");
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace nsbm

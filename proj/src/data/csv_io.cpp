#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string_view>

#include "mmtraj/data.hpp"
#include "mmtraj/errors.hpp"

namespace mmtraj::data {

namespace {

constexpr std::string_view kHeader = "frame,vehicle_id,x,y,vx,vy,ax,ay,theta,yaw";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw ParseError("line " + std::to_string(line_no) + ": " + what);
}

long parse_long(std::string_view field, std::size_t line_no, const char* name) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    fail(line_no, std::string("invalid integer for ") + name + ": '" + std::string(field) + "'");
  }
  return v;
}

double parse_double(std::string_view field, std::size_t line_no, const char* name) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    fail(line_no, std::string("invalid number for ") + name + ": '" + std::string(field) + "'");
  }
  return v;
}

double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  if (a > -kPi && a <= kPi) return a;
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

bool read_header(std::istream& in, std::string_view expected) {
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    return t == expected;
  }
  return false;
}

}  // namespace

long Recording::first_frame() const {
  long f = 0;
  bool any = false;
  for (const auto& tr : tracks) {
    if (tr.states.empty()) continue;
    f = any ? std::min(f, tr.states.front().frame) : tr.states.front().frame;
    any = true;
  }
  return f;
}

long Recording::last_frame() const {
  long f = -1;
  for (const auto& tr : tracks) {
    if (!tr.states.empty()) f = std::max(f, tr.states.back().frame);
  }
  return f;
}

Recording parse_csv(std::istream& in, const std::string& source, double sample_rate_hz) {
  if (!(sample_rate_hz > 0.0)) throw UsageError("sample_rate_hz must be positive");
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (trim(line) != kHeader) fail(line_no, "expected header '" + std::string(kHeader) + "'");
    have_header = true;
    break;
  }
  Recording rec;
  rec.source = source;
  rec.sample_rate_hz = sample_rate_hz;
  if (!have_header) {
    if (line_no == 0) return rec;
    fail(line_no, "missing header");
  }

  std::map<long, VehicleTrack> tracks;
  std::map<long, std::set<long>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != 10) fail(line_no, "expected 10 fields, got " + std::to_string(f.size()));
    MotionState s;
    s.frame = parse_long(f[0], line_no, "frame");
    if (s.frame < 0) fail(line_no, "negative frame");
    s.vehicle_id = parse_long(f[1], line_no, "vehicle_id");
    s.x = parse_double(f[2], line_no, "x");
    s.y = parse_double(f[3], line_no, "y");
    s.vx = parse_double(f[4], line_no, "vx");
    s.vy = parse_double(f[5], line_no, "vy");
    s.ax = parse_double(f[6], line_no, "ax");
    s.ay = parse_double(f[7], line_no, "ay");
    s.theta = wrap_angle(parse_double(f[8], line_no, "theta"));
    s.yaw = parse_double(f[9], line_no, "yaw");

    auto& frames = seen[s.vehicle_id];
    if (!frames.insert(s.frame).second) {
      throw DataError("duplicate row for vehicle " + std::to_string(s.vehicle_id) + ", frame " +
                      std::to_string(s.frame) + " (line " + std::to_string(line_no) + ")");
    }
    auto& track = tracks[s.vehicle_id];
    track.vehicle_id = s.vehicle_id;
    if (!track.states.empty() && s.frame < track.states.back().frame) {
      throw DataError("non-monotone frames for vehicle " + std::to_string(s.vehicle_id) + ": frame " +
                      std::to_string(s.frame) + " after " + std::to_string(track.states.back().frame) +
                      " (line " + std::to_string(line_no) + ")");
    }
    track.states.push_back(s);
  }
  for (auto& [id, tr] : tracks) rec.tracks.push_back(std::move(tr));
  return rec;
}

Recording load_csv(const std::filesystem::path& path, double sample_rate_hz) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in, path.string(), sample_rate_hz);
}

void write_csv(std::ostream& out, const std::vector<MotionState>& rows) {
  out << kHeader << '\n';
  for (const auto& s : rows) {
    out << s.frame << ',' << s.vehicle_id << ',' << fmt(s.x) << ',' << fmt(s.y) << ',' << fmt(s.vx) << ','
        << fmt(s.vy) << ',' << fmt(s.ax) << ',' << fmt(s.ay) << ',' << fmt(s.theta) << ',' << fmt(s.yaw)
        << '\n';
  }
}

void save_scene(const Scene& scene, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<MotionState> rows;
  for (std::size_t t = 0; t < scene.t_total(); ++t) {
    for (std::size_t n = 0; n < scene.num_vehicles(); ++n) {
      if (!scene.present(n, t)) continue;
      MotionState s;
      s.frame = scene.meta.chunk_offset + static_cast<long>(t);
      s.vehicle_id = scene.ids[n];
      s.x = scene.feature(n, t, kX);
      s.y = scene.feature(n, t, kY);
      s.vx = scene.feature(n, t, kVx);
      s.vy = scene.feature(n, t, kVy);
      s.ax = scene.feature(n, t, kAx);
      s.ay = scene.feature(n, t, kAy);
      s.theta = scene.feature(n, t, kTheta);
      s.yaw = scene.feature(n, t, kYaw);
      rows.push_back(s);
    }
  }
  {
    std::ofstream out(dir / "scene.csv", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "scene.csv").string());
    write_csv(out, rows);
  }
  std::ofstream mask(dir / "mask.csv", std::ios::binary);
  if (!mask) throw IoError("cannot write " + (dir / "mask.csv").string());
  mask << "vehicle_id,frame,present\n";
  for (std::size_t n = 0; n < scene.num_vehicles(); ++n) {
    for (std::size_t t = 0; t < scene.t_total(); ++t) {
      mask << scene.ids[n] << ',' << scene.meta.chunk_offset + static_cast<long>(t) << ','
           << (scene.present(n, t) ? 1 : 0) << '\n';
    }
  }
}

Scene load_scene(const std::filesystem::path& dir, std::size_t t_hist, std::size_t t_pred,
                 double sample_rate_hz) {
  const Recording rec = load_csv(dir / "scene.csv", sample_rate_hz);

  std::ifstream in(dir / "mask.csv");
  if (!in) throw IoError("cannot open " + (dir / "mask.csv").string());
  if (!read_header(in, "vehicle_id,frame,present")) {
    throw ParseError((dir / "mask.csv").string() + ": expected header 'vehicle_id,frame,present'");
  }
  std::vector<long> order;
  std::map<long, std::map<long, bool>> present;
  long offset = 0;
  bool any = false;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != 3) fail(line_no, "mask.csv: expected 3 fields");
    const long id = parse_long(f[0], line_no, "vehicle_id");
    const long frame = parse_long(f[1], line_no, "frame");
    const long p = parse_long(f[2], line_no, "present");
    if (p != 0 && p != 1) fail(line_no, "mask.csv: present must be 0 or 1");
    if (!present.contains(id)) order.push_back(id);
    present[id][frame] = p == 1;
    offset = any ? std::min(offset, frame) : frame;
    any = true;
  }

  const std::size_t total = t_hist + t_pred;
  std::map<long, const VehicleTrack*> by_id;
  for (const auto& tr : rec.tracks) by_id[tr.vehicle_id] = &tr;

  std::vector<std::vector<std::optional<MotionState>>> rows(order.size(),
                                                            std::vector<std::optional<MotionState>>(total));
  for (std::size_t n = 0; n < order.size(); ++n) {
    const long id = order[n];
    for (const auto& [frame, p] : present[id]) {
      const long t = frame - offset;
      if (t < 0 || static_cast<std::size_t>(t) >= total) {
        throw DataError("mask frame " + std::to_string(frame) + " outside the scene window");
      }
      (void)p;
    }
    if (by_id.contains(id)) {
      for (const auto& s : by_id[id]->states) {
        const long t = s.frame - offset;
        if (t < 0 || static_cast<std::size_t>(t) >= total) {
          throw DataError("scene row frame " + std::to_string(s.frame) + " outside the scene window");
        }
        rows[n][static_cast<std::size_t>(t)] = s;
      }
    }
    for (std::size_t t = 0; t < total; ++t) {
      const auto it = present[id].find(offset + static_cast<long>(t));
      const bool marked = it != present[id].end() && it->second;
      if (marked != rows[n][t].has_value()) {
        throw DataError("mask.csv disagrees with scene.csv for vehicle " + std::to_string(id) + ", frame " +
                        std::to_string(offset + static_cast<long>(t)));
      }
    }
  }
  for (const auto& tr : rec.tracks) {
    if (!present.contains(tr.vehicle_id)) {
      throw DataError("vehicle " + std::to_string(tr.vehicle_id) + " missing from mask.csv");
    }
  }
  return make_scene(rows, t_hist, t_pred, sample_rate_hz, SceneMeta{dir.string(), offset});
}

}  // namespace mmtraj::data

#include "fieldslam/tum_io.hpp"

#include "fieldslam/pnm_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fieldslam {

namespace {

std::string format_shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct TimedName {
  double timestamp;
  std::string name;
};

std::vector<TimedName> read_file_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file " + path.string());
  std::vector<TimedName> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    TimedName tn;
    if (!(ls >> tn.timestamp)) {
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": unparseable timestamp");
    }
    if (!(ls >> tn.name)) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": missing filename");
    }
    out.push_back(tn);
  }
  std::sort(out.begin(), out.end(),
            [](const TimedName& a, const TimedName& b) { return a.timestamp < b.timestamp; });
  return out;
}

// Index of the nearest timestamp in a sorted list.
size_t nearest_index(const std::vector<TimedName>& list, double t) {
  const auto it = std::lower_bound(
      list.begin(), list.end(), t,
      [](const TimedName& a, double value) { return a.timestamp < value; });
  if (it == list.begin()) return 0;
  if (it == list.end()) return list.size() - 1;
  const size_t hi = static_cast<size_t>(it - list.begin());
  const size_t lo = hi - 1;
  return (t - list[lo].timestamp) <= (list[hi].timestamp - t) ? lo : hi;
}

}  // namespace

std::string serialize_pose_line(double timestamp, const Pose& pose) {
  std::ostringstream os;
  os << format_shortest(timestamp) << ' ' << format_shortest(pose.t.x()) << ' '
     << format_shortest(pose.t.y()) << ' ' << format_shortest(pose.t.z()) << ' '
     << format_shortest(pose.q.x()) << ' ' << format_shortest(pose.q.y()) << ' '
     << format_shortest(pose.q.z()) << ' ' << format_shortest(pose.q.w());
  return os.str();
}

std::pair<double, Pose> parse_pose_line(const std::string& line) {
  std::istringstream ls(line);
  double t, tx, ty, tz, qx, qy, qz, qw;
  if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
    throw IoError("unparseable pose line: '" + line + "'");
  }
  Pose p;
  p.t = Vec3(tx, ty, tz);
  p.q = Quat(qw, qx, qy, qz);
  return {t, p};
}

void write_trajectory(const std::filesystem::path& path, const std::vector<TimedPose>& traj) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# trajectory\n# timestamp tx ty tz qx qy qz qw\n";
  for (const TimedPose& tp : traj) out << serialize_pose_line(tp.timestamp, tp.pose) << "\n";
}

std::vector<TimedPose> read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing trajectory file " + path.string());
  std::vector<TimedPose> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      const auto [t, pose] = parse_pose_line(line);
      out.push_back({t, pose});
    } catch (const IoError& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# fx fy cx cy width height depth_scale\n";
  out << format_shortest(k.fx) << ' ' << format_shortest(k.fy) << ' ' << format_shortest(k.cx)
      << ' ' << format_shortest(k.cy) << ' ' << k.width << ' ' << k.height << ' '
      << format_shortest(k.depth_scale) << "\n";
}

CameraIntrinsics read_intrinsics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing intrinsics file " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ls(line);
    CameraIntrinsics k;
    if (!(ls >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height >> k.depth_scale)) {
      throw IoError(path.string() + ": unparseable intrinsics line");
    }
    return k;
  }
  throw IoError(path.string() + ": no intrinsics found");
}

SequenceSource load_tum_sequence(const std::filesystem::path& dir, const TumLoadOptions& opts) {
  const auto rgb_list = read_file_list(dir / "rgb.txt");
  const auto depth_list = read_file_list(dir / "depth.txt");
  if (rgb_list.empty()) throw IoError(dir.string() + ": rgb.txt lists no images");
  if (depth_list.empty()) throw IoError(dir.string() + ": depth.txt lists no images");

  SequenceSource seq;
  double depth_scale = opts.depth_scale;
  if (std::filesystem::exists(dir / "intrinsics.txt")) {
    seq.intrinsics = read_intrinsics(dir / "intrinsics.txt");
    depth_scale = seq.intrinsics.depth_scale;
  } else if (opts.intrinsics) {
    seq.intrinsics = *opts.intrinsics;
    seq.intrinsics.depth_scale = depth_scale;
  } else {
    throw ConfigError(dir.string() +
                      ": no intrinsics.txt and no cam_fx/cam_fy/... configured");
  }
  seq.intrinsics.validate();

  std::vector<TimedPose> gt;
  if (std::filesystem::exists(dir / "groundtruth.txt")) {
    gt = read_trajectory(dir / "groundtruth.txt");
    seq.has_groundtruth = !gt.empty();
  }

  int id = 0;
  double last_ts = -std::numeric_limits<double>::infinity();
  for (const TimedName& rgb_entry : rgb_list) {
    const size_t di = nearest_index(depth_list, rgb_entry.timestamp);
    if (std::abs(depth_list[di].timestamp - rgb_entry.timestamp) > opts.assoc_tol_s) continue;
    if (rgb_entry.timestamp <= last_ts) continue;  // keep timestamps strictly increasing

    Frame f;
    f.id = id;
    f.timestamp = rgb_entry.timestamp;
    f.intrinsics = seq.intrinsics;
    const PpmImage rgb = read_ppm(dir / rgb_entry.name);
    const Pgm16Image depth = read_pgm16(dir / depth_list[di].name);
    if (rgb.width != seq.intrinsics.width || rgb.height != seq.intrinsics.height) {
      throw IoError(rgb_entry.name + ": image size does not match intrinsics");
    }
    if (depth.width != rgb.width || depth.height != rgb.height) {
      throw IoError(depth_list[di].name + ": depth size does not match color");
    }
    f.rgb.resize(rgb.rgb.size());
    for (size_t i = 0; i < rgb.rgb.size(); ++i) {
      f.rgb[i] = static_cast<float>(rgb.rgb[i]) / 255.0f;
    }
    f.depth.resize(depth.gray.size());
    for (size_t i = 0; i < depth.gray.size(); ++i) {
      // Raw 0 stays exactly 0 (invalid).
      f.depth[i] = static_cast<float>(depth.gray[i] / depth_scale);
    }
    if (!gt.empty()) {
      // Nearest ground-truth pose within the association tolerance.
      size_t best = 0;
      double best_dt = std::numeric_limits<double>::infinity();
      for (size_t gi = 0; gi < gt.size(); ++gi) {
        const double dt = std::abs(gt[gi].timestamp - f.timestamp);
        if (dt < best_dt) {
          best_dt = dt;
          best = gi;
        }
      }
      if (best_dt <= opts.assoc_tol_s) f.gt_pose = gt[best].pose;
    }
    last_ts = f.timestamp;
    f.pose = Pose::identity();
    seq.frames.push_back(std::move(f));
    ++id;
  }
  if (seq.frames.empty()) {
    throw IoError(dir.string() + ": no rgb/depth pairs within the association tolerance");
  }
  return seq;
}

}  // namespace fieldslam

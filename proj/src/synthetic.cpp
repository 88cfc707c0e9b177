#include "fieldslam/synthetic.hpp"

#include "fieldslam/pnm_io.hpp"
#include "fieldslam/tum_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fieldslam {

namespace {

double box_exterior_sdf(const Vec3& p, const Vec3& center, const Vec3& half) {
  const Vec3 q = (p - center).cwiseAbs() - half;
  const Vec3 qpos = q.cwiseMax(0.0);
  return qpos.norm() + std::min(q.maxCoeff(), 0.0);
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

SyntheticScene::SyntheticScene(SyntheticSceneConfig cfg) : cfg_(std::move(cfg)) {}

double SyntheticScene::sdf(const Vec3& p) const {
  double d = std::numeric_limits<double>::infinity();
  if (cfg_.closed_room) {
    // Interior of the room: negated exterior SDF of the room box.
    const Vec3 c = 0.5 * (cfg_.room_min + cfg_.room_max);
    const Vec3 h = 0.5 * (cfg_.room_max - cfg_.room_min);
    d = -box_exterior_sdf(p, c, h);
  }
  for (const SynthBox& b : cfg_.boxes) d = std::min(d, box_exterior_sdf(p, b.center, b.half));
  for (const SynthSphere& s : cfg_.spheres) d = std::min(d, (p - s.center).norm() - s.radius);
  return d;
}

Vec3 SyntheticScene::color(const Vec3& p) const {
  const Vec3 ext = cfg_.room_max - cfg_.room_min;
  const Vec3 u = (p - cfg_.room_min).cwiseQuotient(ext);
  Vec3 c(0.3 + 0.45 * u.x(), 0.3 + 0.45 * u.y(), 0.3 + 0.45 * u.z());
  const long par = static_cast<long>(std::floor(p.x() / cfg_.checker_cell_m)) +
                   static_cast<long>(std::floor(p.y() / cfg_.checker_cell_m)) +
                   static_cast<long>(std::floor(p.z() / cfg_.checker_cell_m));
  const double checker = (par % 2 + 2) % 2 == 0 ? 0.12 : -0.12;
  c.array() += checker;
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

CameraIntrinsics SyntheticScene::intrinsics() const {
  CameraIntrinsics k;
  k.fx = cfg_.focal;
  k.fy = cfg_.focal;
  k.cx = cfg_.width / 2.0;
  k.cy = cfg_.height / 2.0;
  k.width = cfg_.width;
  k.height = cfg_.height;
  k.depth_scale = cfg_.depth_scale;
  return k;
}

Pose look_along(const Vec3& eye, const Vec3& forward) {
  const Vec3 z = forward.normalized();
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  Pose pose;
  pose.q = Quat(r).normalized();
  pose.t = eye;
  return pose;
}

Pose SyntheticScene::pose_at(int i) const {
  const Vec3 room_center = 0.5 * (cfg_.room_min + cfg_.room_max);
  // Phase offset keeps every pose clear of axis-aligned degeneracies (rays
  // riding exactly along grid lattice planes).
  const double phi =
      cfg_.orbit_arc_deg * M_PI / 180.0 * static_cast<double>(i) / cfg_.frames + 0.37;
  const Vec3 eye(room_center.x() + cfg_.orbit_radius * std::cos(phi),
                 room_center.y() + cfg_.orbit_radius * std::sin(phi), cfg_.orbit_height);
  const double pitch = cfg_.orbit_pitch_deg * M_PI / 180.0;
  const Vec3 forward(std::cos(phi) * std::cos(pitch), std::sin(phi) * std::cos(pitch),
                     -std::sin(pitch));
  return look_along(eye, forward);
}

void render_synthetic_frame(const SyntheticScene& scene, const Pose& pose,
                            const CameraIntrinsics& k, std::vector<float>& rgb,
                            std::vector<float>& depth) {
  rgb.assign(static_cast<size_t>(3) * k.width * k.height, 0.0f);
  depth.assign(static_cast<size_t>(k.width) * k.height, 0.0f);
  const Mat3 r = pose.rotation();
  const double diag = (scene.config().room_max - scene.config().room_min).norm();
  const double t_max = scene.config().closed_room ? 2.0 * diag : 4.0 * diag;
  constexpr double kTol = 1e-5;
  constexpr int kMaxSteps = 256;
  for (int py = 0; py < k.height; ++py) {
    for (int px = 0; px < k.width; ++px) {
      const Vec3 dc = k.pixel_dir(px, py);
      const double inv_norm = 1.0 / dc.norm();
      const Vec3 dir = r * (dc * inv_norm);
      double t = 0.0;
      bool hit = false;
      for (int step = 0; step < kMaxSteps; ++step) {
        const Vec3 p = pose.t + t * dir;
        const double s = scene.sdf(p);
        if (s < kTol) {
          hit = true;
          break;
        }
        t += s;
        if (t > t_max) break;
      }
      const size_t at = static_cast<size_t>(py) * k.width + px;
      if (!hit) continue;  // depth stays 0 (invalid)
      const Vec3 p = pose.t + t * dir;
      const Vec3 c = scene.color(p);
      rgb[3 * at + 0] = static_cast<float>(c.x());
      rgb[3 * at + 1] = static_cast<float>(c.y());
      rgb[3 * at + 2] = static_cast<float>(c.z());
      depth[at] = static_cast<float>(t * inv_norm);  // planar depth
    }
  }
}

void write_scene_file(const SyntheticSceneConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# analytic scene description\n";
  out << "room_min = " << fmt(cfg.room_min.x()) << ' ' << fmt(cfg.room_min.y()) << ' '
      << fmt(cfg.room_min.z()) << "\n";
  out << "room_max = " << fmt(cfg.room_max.x()) << ' ' << fmt(cfg.room_max.y()) << ' '
      << fmt(cfg.room_max.z()) << "\n";
  out << "closed_room = " << (cfg.closed_room ? 1 : 0) << "\n";
  for (const SynthBox& b : cfg.boxes) {
    out << "box = " << fmt(b.center.x()) << ' ' << fmt(b.center.y()) << ' ' << fmt(b.center.z())
        << ' ' << fmt(b.half.x()) << ' ' << fmt(b.half.y()) << ' ' << fmt(b.half.z()) << "\n";
  }
  for (const SynthSphere& s : cfg.spheres) {
    out << "sphere = " << fmt(s.center.x()) << ' ' << fmt(s.center.y()) << ' '
        << fmt(s.center.z()) << ' ' << fmt(s.radius) << "\n";
  }
  out << "checker_cell_m = " << fmt(cfg.checker_cell_m) << "\n";
  out << "frames = " << cfg.frames << "\n";
  out << "width = " << cfg.width << "\n";
  out << "height = " << cfg.height << "\n";
  out << "focal = " << fmt(cfg.focal) << "\n";
  out << "depth_scale = " << fmt(cfg.depth_scale) << "\n";
  out << "frame_dt = " << fmt(cfg.frame_dt) << "\n";
  out << "orbit_radius = " << fmt(cfg.orbit_radius) << "\n";
  out << "orbit_height = " << fmt(cfg.orbit_height) << "\n";
  out << "orbit_pitch_deg = " << fmt(cfg.orbit_pitch_deg) << "\n";
  out << "orbit_arc_deg = " << fmt(cfg.orbit_arc_deg) << "\n";
}

SyntheticSceneConfig read_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing scene file " + path.string());
  SyntheticSceneConfig cfg;
  cfg.boxes.clear();
  cfg.spheres.clear();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    std::istringstream vs(line.substr(eq + 1));
    const auto fail = [&]() {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad value for " + key);
    };
    if (key == "room_min") {
      if (!(vs >> cfg.room_min.x() >> cfg.room_min.y() >> cfg.room_min.z())) fail();
    } else if (key == "room_max") {
      if (!(vs >> cfg.room_max.x() >> cfg.room_max.y() >> cfg.room_max.z())) fail();
    } else if (key == "closed_room") {
      int v;
      if (!(vs >> v)) fail();
      cfg.closed_room = v != 0;
    } else if (key == "box") {
      SynthBox b;
      if (!(vs >> b.center.x() >> b.center.y() >> b.center.z() >> b.half.x() >> b.half.y() >>
            b.half.z())) {
        fail();
      }
      cfg.boxes.push_back(b);
    } else if (key == "sphere") {
      SynthSphere s;
      if (!(vs >> s.center.x() >> s.center.y() >> s.center.z() >> s.radius)) fail();
      cfg.spheres.push_back(s);
    } else if (key == "checker_cell_m") {
      if (!(vs >> cfg.checker_cell_m)) fail();
    } else if (key == "frames") {
      if (!(vs >> cfg.frames)) fail();
    } else if (key == "width") {
      if (!(vs >> cfg.width)) fail();
    } else if (key == "height") {
      if (!(vs >> cfg.height)) fail();
    } else if (key == "focal") {
      if (!(vs >> cfg.focal)) fail();
    } else if (key == "depth_scale") {
      if (!(vs >> cfg.depth_scale)) fail();
    } else if (key == "frame_dt") {
      if (!(vs >> cfg.frame_dt)) fail();
    } else if (key == "orbit_radius") {
      if (!(vs >> cfg.orbit_radius)) fail();
    } else if (key == "orbit_height") {
      if (!(vs >> cfg.orbit_height)) fail();
    } else if (key == "orbit_pitch_deg") {
      if (!(vs >> cfg.orbit_pitch_deg)) fail();
    } else if (key == "orbit_arc_deg") {
      if (!(vs >> cfg.orbit_arc_deg)) fail();
    } else {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": unknown key " + key);
    }
  }
  return cfg;
}

void write_synthetic_dataset(const SyntheticScene& scene, const std::filesystem::path& out_dir,
                             bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    throw IoError(out_dir.string() + " exists and is not empty (use --force to overwrite)");
  }
  fs::create_directories(out_dir / "rgb");
  fs::create_directories(out_dir / "depth");

  const CameraIntrinsics k = scene.intrinsics();
  std::ofstream rgb_txt(out_dir / "rgb.txt");
  std::ofstream depth_txt(out_dir / "depth.txt");
  rgb_txt << "# color images\n# timestamp filename\n";
  depth_txt << "# depth images\n# timestamp filename\n";
  std::vector<TimedPose> gt;

  std::vector<float> rgb, depth;
  std::vector<uint8_t> rgb8(static_cast<size_t>(3) * k.width * k.height);
  std::vector<uint16_t> depth16(static_cast<size_t>(k.width) * k.height);
  for (int i = 0; i < scene.frame_count(); ++i) {
    const Pose pose = scene.pose_at(i);
    render_synthetic_frame(scene, pose, k, rgb, depth);
    for (size_t j = 0; j < rgb8.size(); ++j) {
      rgb8[j] = static_cast<uint8_t>(std::lround(std::min(1.0f, std::max(0.0f, rgb[j])) * 255.0f));
    }
    for (size_t j = 0; j < depth16.size(); ++j) {
      const double raw = std::min(65535.0, std::max(0.0, std::round(depth[j] * k.depth_scale)));
      depth16[j] = static_cast<uint16_t>(raw);
    }
    char name[64];
    std::snprintf(name, sizeof(name), "frame_%06d", i);
    const std::string rgb_name = std::string("rgb/") + name + ".ppm";
    const std::string depth_name = std::string("depth/") + name + ".pgm";
    write_ppm(out_dir / rgb_name, k.width, k.height, rgb8.data());
    write_pgm16(out_dir / depth_name, k.width, k.height, depth16.data());
    const double ts = scene.timestamp(i);
    rgb_txt << fmt(ts) << ' ' << rgb_name << "\n";
    depth_txt << fmt(ts) << ' ' << depth_name << "\n";
    gt.push_back({ts, pose});
  }
  write_trajectory(out_dir / "groundtruth.txt", gt);
  write_intrinsics(out_dir / "intrinsics.txt", k);
  write_scene_file(scene.config(), out_dir / "scene.txt");
}

}  // namespace fieldslam

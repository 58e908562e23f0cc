#pragma once

// On-disk layout of one sequence directory:
//
//   <dir>/manifest.json
//   <dir>/frames/<frame:06>_b<bracket>.png     16-bit grayscale, 12-bit DN
//   <dir>/reference.txt                        optional TUM reference trajectory
//
// manifest.json (version 1):
//   { "version": 1, "id": str, "subset": str, "ladder_ms": [..], "frame_count": n,
//     "width": w, "height": h, "reference_trajectory": str (optional),
//     "frames": [ { "timestamp": s, "images": [paths..],
//                   "pose": [tx, ty, tz, qx, qy, qz, qw] (optional) } ] }

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <png.h>

#include "expobench/core.hpp"
#include "expobench/trajectory.hpp"

namespace expobench {

namespace fs = std::filesystem;

// ---- PNG ------------------------------------------------------------------

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Writes a 16-bit grayscale PNG holding the 12-bit DN.
inline void write_png(const fs::path& path, const Image12& img) {
  detail::FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::IoFailure, "libpng initialization failed");
  }
  std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * 2);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::IoFailure, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto v = img.at(x, y);
      row[static_cast<std::size_t>(x) * 2] = static_cast<png_byte>(v >> 8);
      row[static_cast<std::size_t>(x) * 2 + 1] = static_cast<png_byte>(v & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Reads a 16-bit grayscale PNG; values above 4095 are rejected.
inline Image12 read_png(const fs::path& path) {
  detail::FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(ErrorKind::CorruptImage, "cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail(ErrorKind::CorruptImage, path.string() + " is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::IoFailure, "libpng initialization failed");
  }
  std::vector<std::uint16_t> data;
  int width = 0, height = 0;
  bool wrong_format = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::CorruptImage, "corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    wrong_format = true;
  } else {
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    data.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < width; ++x) {
        data[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] =
            static_cast<std::uint16_t>((row[static_cast<std::size_t>(x) * 2] << 8) | row[static_cast<std::size_t>(x) * 2 + 1]);
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (wrong_format) fail(ErrorKind::CorruptImage, path.string() + " is not a 16-bit grayscale PNG");
  for (auto v : data)
    if (v > kMaxDn) fail(ErrorKind::RangeViolation, path.string() + " holds a value above 4095");
  return Image12(width, height, std::move(data));
}

// ---- trajectories ---------------------------------------------------------

/// Parses TUM lines `timestamp tx ty tz qx qy qz qw`; `#` starts a comment line.
/// Quaternions within 1e-3 of unit norm are renormalized, others rejected.
inline Trajectory parse_trajectory(std::istream& is) {
  std::vector<StampedPose> poses;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v)
      if (!(ls >> x)) fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected 8 numbers");
    std::string extra;
    if (ls >> extra) fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": trailing data");
    StampedPose p;
    p.timestamp = v[0];
    p.translation = {v[1], v[2], v[3]};
    p.rotation = Eigen::Quaterniond(v[7], v[4], v[5], v[6]);
    const double norm = p.rotation.norm();
    if (!(std::abs(norm - 1.0) < 1e-3)) fail(ErrorKind::BadQuaternion, "line " + std::to_string(lineno) + ": quaternion not unit-norm");
    p.rotation.normalize();
    if (!poses.empty() && !(p.timestamp > poses.back().timestamp))
      fail(ErrorKind::NonMonotoneTimestamps, "line " + std::to_string(lineno) + ": timestamps must increase");
    poses.push_back(p);
  }
  return Trajectory(std::move(poses));
}

inline Trajectory load_trajectory(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  return parse_trajectory(is);
}

inline void write_trajectory(std::ostream& os, const Trajectory& traj) {
  os << "# timestamp tx ty tz qx qy qz qw\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& p : traj.poses()) {
    os << p.timestamp << ' ' << p.translation.x() << ' ' << p.translation.y() << ' ' << p.translation.z() << ' '
       << p.rotation.x() << ' ' << p.rotation.y() << ' ' << p.rotation.z() << ' ' << p.rotation.w() << '\n';
  }
}

inline void save_trajectory(const fs::path& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  write_trajectory(os, traj);
  if (!os) fail(ErrorKind::IoFailure, "failed writing " + path.string());
}

inline StampedPose to_stamped(double timestamp, const Pose& p) {
  StampedPose s;
  s.timestamp = timestamp;
  s.translation = {p.translation[0], p.translation[1], p.translation[2]};
  s.rotation = Eigen::Quaterniond(p.rotation[3], p.rotation[0], p.rotation[1], p.rotation[2]);
  return s;
}

/// Poses attached to the frames of a sequence, if every frame carries one.
inline std::optional<Trajectory> sequence_trajectory(const Sequence& seq) {
  if (seq.frames.empty()) return std::nullopt;
  std::vector<StampedPose> poses;
  for (const auto& f : seq.frames) {
    if (!f.pose) return std::nullopt;
    poses.push_back(to_stamped(f.timestamp, *f.pose));
  }
  return Trajectory(std::move(poses));
}

// ---- sequences --------------------------------------------------------------

struct SequenceManifest {
  int version = 1;
  std::string id;
  std::string subset = "all";
  std::vector<double> ladder_ms;
  std::size_t frame_count = 0;
  int width = 0;
  int height = 0;
  std::optional<std::string> reference_trajectory;
  std::vector<double> timestamps;
  std::vector<std::vector<std::string>> image_paths;
  std::vector<std::optional<Pose>> poses;
};

inline constexpr const char* kManifestName = "manifest.json";

inline nlohmann::json manifest_to_json(const SequenceManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["id"] = m.id;
  j["subset"] = m.subset;
  j["ladder_ms"] = m.ladder_ms;
  j["frame_count"] = m.frame_count;
  j["width"] = m.width;
  j["height"] = m.height;
  if (m.reference_trajectory) j["reference_trajectory"] = *m.reference_trajectory;
  j["frames"] = nlohmann::json::array();
  for (std::size_t i = 0; i < m.frame_count; ++i) {
    nlohmann::json f;
    f["timestamp"] = m.timestamps[i];
    f["images"] = m.image_paths[i];
    if (m.poses[i]) {
      const auto& p = *m.poses[i];
      f["pose"] = {p.translation[0], p.translation[1], p.translation[2], p.rotation[0],
                   p.rotation[1],    p.rotation[2],    p.rotation[3]};
    }
    j["frames"].push_back(std::move(f));
  }
  return j;
}

inline SequenceManifest manifest_from_json(const nlohmann::json& j) {
  SequenceManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != 1) fail(ErrorKind::ParseError, "unsupported manifest version " + std::to_string(m.version));
    m.id = j.at("id").get<std::string>();
    m.subset = j.value("subset", std::string("all"));
    m.ladder_ms = j.at("ladder_ms").get<std::vector<double>>();
    m.frame_count = j.at("frame_count").get<std::size_t>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    if (j.contains("reference_trajectory")) m.reference_trajectory = j.at("reference_trajectory").get<std::string>();
    const auto& frames = j.at("frames");
    if (frames.size() != m.frame_count) fail(ErrorKind::ParseError, "frame_count disagrees with frames list");
    for (const auto& f : frames) {
      m.timestamps.push_back(f.at("timestamp").get<double>());
      m.image_paths.push_back(f.at("images").get<std::vector<std::string>>());
      if (f.contains("pose")) {
        const auto v = f.at("pose").get<std::vector<double>>();
        if (v.size() != 7) fail(ErrorKind::ParseError, "pose must have 7 components");
        m.poses.push_back(Pose{{v[0], v[1], v[2]}, {v[3], v[4], v[5], v[6]}});
      } else {
        m.poses.emplace_back();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed manifest: ") + e.what());
  }
  for (std::size_t i = 0; i < m.ladder_ms.size(); ++i) {
    if (!(m.ladder_ms[i] > 0.0) || (i > 0 && !(m.ladder_ms[i] > m.ladder_ms[i - 1])))
      fail(ErrorKind::LadderMismatch, "manifest ladder must be positive and strictly increasing");
  }
  for (const auto& paths : m.image_paths)
    if (paths.size() != m.ladder_ms.size()) fail(ErrorKind::LadderMismatch, "frame image count differs from the ladder");
  return m;
}

inline SequenceManifest load_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  std::ifstream is(path);
  if (!is) fail(ErrorKind::MissingManifest, "no manifest.json in " + dir.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("manifest is not valid JSON: ") + e.what());
  }
  return manifest_from_json(j);
}

/// Loads and validates a sequence directory.
inline Sequence load_sequence(const fs::path& dir) {
  const SequenceManifest m = load_manifest(dir);
  Sequence seq;
  seq.id = m.id;
  std::vector<ExposureTime> ladder;
  for (double ms : m.ladder_ms) ladder.emplace_back(ms);
  for (std::size_t i = 0; i < m.frame_count; ++i) {
    BracketFrame f;
    f.timestamp = m.timestamps[i];
    f.pose = m.poses[i];
    f.exposures = ladder;
    for (const auto& rel : m.image_paths[i]) {
      Image12 img = read_png(dir / rel);
      if (img.width() != m.width || img.height() != m.height)
        fail(ErrorKind::DimensionMismatch, rel + " does not match the manifest dimensions");
      f.images.push_back(std::move(img));
    }
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  return seq;
}

struct SaveOptions {
  std::string subset = "all";
  // Writes reference.txt from the frame poses when every frame has one.
  bool write_reference = true;
};

inline void save_sequence(const Sequence& seq, const fs::path& dir, const SaveOptions& opts = {}) {
  seq.validate();
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  if (ec) fail(ErrorKind::IoFailure, "cannot create " + (dir / "frames").string() + ": " + ec.message());

  SequenceManifest m;
  m.id = seq.id;
  m.subset = opts.subset;
  m.frame_count = seq.frames.size();
  for (const auto& e : seq.ladder()) m.ladder_ms.push_back(e.ms());
  if (!seq.frames.empty()) {
    m.width = seq.frames.front().images.front().width();
    m.height = seq.frames.front().images.front().height();
  }
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    std::vector<std::string> paths;
    for (std::size_t b = 0; b < f.images.size(); ++b) {
      char name[48];
      std::snprintf(name, sizeof name, "frames/%06zu_b%zu.png", i, b);
      write_png(dir / name, f.images[b]);
      paths.emplace_back(name);
    }
    m.timestamps.push_back(f.timestamp);
    m.image_paths.push_back(std::move(paths));
    m.poses.push_back(f.pose);
  }
  if (opts.write_reference) {
    if (auto traj = sequence_trajectory(seq)) {
      save_trajectory(dir / "reference.txt", *traj);
      m.reference_trajectory = "reference.txt";
    }
  }
  std::ofstream os(dir / kManifestName);
  if (!os) fail(ErrorKind::IoFailure, "cannot write manifest in " + dir.string());
  os << manifest_to_json(m).dump(2) << '\n';
  if (!os) fail(ErrorKind::IoFailure, "failed writing manifest in " + dir.string());
}

/// Sequence directories of a dataset: `root` itself when it holds a manifest,
/// otherwise its immediate subdirectories that do, sorted by name.
inline std::vector<fs::path> list_sequence_dirs(const fs::path& root) {
  if (fs::exists(root / kManifestName)) return {root};
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root, ec))
    if (entry.is_directory() && fs::exists(entry.path() / kManifestName)) out.push_back(entry.path());
  if (ec) fail(ErrorKind::MissingManifest, "cannot read dataset directory " + root.string());
  std::sort(out.begin(), out.end());
  if (out.empty()) fail(ErrorKind::MissingManifest, "no sequence manifests under " + root.string());
  return out;
}

}  // namespace expobench

#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cleanfield/config.hpp"
#include "cleanfield/core.hpp"
#include "cleanfield/image.hpp"
#include "cleanfield/render.hpp"
#include "cleanfield/scenes.hpp"

namespace cleanfield {

// ---------------------------------------------------------------------------
// Dataset manifest (manifest.json):
//   format        "cleanfield-dataset"
//   version       1
//   resolution    [width, height]
//   intrinsics    {focal, cx, cy} in pixels
//   views         [{id, image, split: "train"|"test",
//                   pose: 3x4 camera-to-world, row-major (rotation | position)}]
//   scene         optional embedded scene description

inline constexpr const char* kManifestName = "manifest.json";

inline std::string view_image_name(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%03zu.ppm", id);
  return buf;
}

inline nlohmann::json manifest_json(const Dataset& ds) {
  using nlohmann::json;
  if (ds.views.empty()) fail(ErrorKind::invalid_input, "cannot write an empty dataset");
  const CameraPose& ref = ds.views.front().camera;
  json views = json::array();
  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    const CameraPose& c = ds.views[i].camera;
    json pose = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) pose.push_back(c.rotation[r * 3 + k]);
      pose.push_back(c.position[r]);
    }
    views.push_back({{"id", i},
                     {"image", view_image_name(i)},
                     {"split", ds.views[i].train ? "train" : "test"},
                     {"pose", pose}});
  }
  json j = {{"format", "cleanfield-dataset"},
            {"version", 1},
            {"resolution", json::array({ref.width, ref.height})},
            {"intrinsics", {{"focal", ref.focal}, {"cx", ref.cx}, {"cy", ref.cy}}},
            {"views", views}};
  if (ds.scene) j["scene"] = scene_to_json(*ds.scene);
  return j;
}

inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir + ": " + ec.message());
  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    write_ppm(ds.views[i].image, (fs::path(dir) / view_image_name(i)).string());
  }
  const std::string text = manifest_json(ds).dump(2) + "\n";
  write_file_bytes((fs::path(dir) / kManifestName).string(),
                   std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  const std::string path = (fs::path(dir) / kManifestName).string();
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "missing dataset manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, path + ": " + e.what());
  }
  Dataset ds;
  try {
    if (j.at("format") != "cleanfield-dataset" || j.at("version") != 1) {
      fail(ErrorKind::format, path + ": unsupported manifest format");
    }
    const auto w = j.at("resolution").at(0).get<std::uint32_t>();
    const auto h = j.at("resolution").at(1).get<std::uint32_t>();
    const json& intr = j.at("intrinsics");
    for (const json& v : j.at("views")) {
      View view;
      CameraPose& c = view.camera;
      c.width = w;
      c.height = h;
      c.focal = intr.at("focal").get<double>();
      c.cx = intr.at("cx").get<double>();
      c.cy = intr.at("cy").get<double>();
      const json& pose = v.at("pose");
      if (pose.size() != 12) fail(ErrorKind::format, path + ": pose must have 12 entries");
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) c.rotation[r * 3 + k] = pose[r * 4 + k].get<double>();
        c.position[r] = pose[r * 4 + 3].get<double>();
      }
      const std::string split = v.at("split").get<std::string>();
      if (split != "train" && split != "test") fail(ErrorKind::format, path + ": unknown split '" + split + "'");
      view.train = split == "train";
      view.image = read_ppm((fs::path(dir) / v.at("image").get<std::string>()).string());
      if (view.image.width() != w || view.image.height() != h) {
        fail(ErrorKind::format, path + ": image size does not match manifest resolution");
      }
      ds.views.push_back(std::move(view));
    }
    if (j.contains("scene")) ds.scene = scene_from_json(j["scene"]);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, path + ": " + e.what());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Density profile text: one ray per line, comma-separated "t:sigma" pairs.

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorKind::format, "line " + std::to_string(line) + ": malformed number '" + std::string(s) + "'");
  }
  return v;
}

/// Parses profile rows; steps are rebuilt from consecutive depths with the
/// last step repeating the previous one.
inline std::vector<DensityProfile> parse_profiles(std::istream& in) {
  std::vector<DensityProfile> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    DensityProfile p;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) {
        fail(ErrorKind::format, "line " + std::to_string(number) + ": expected 't:sigma', got '" +
                                    std::string(item) + "'");
      }
      p.t.push_back(parse_number(item.substr(0, colon), number));
      p.sigma.push_back(parse_number(item.substr(colon + 1), number));
      if (p.sigma.back() < 0.0) fail(ErrorKind::format, "line " + std::to_string(number) + ": negative density");
      if (p.t.size() > 1 && !(p.t.back() > p.t[p.t.size() - 2])) {
        fail(ErrorKind::format, "line " + std::to_string(number) + ": depths must increase strictly");
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    p.delta.resize(p.t.size());
    for (std::size_t k = 0; k + 1 < p.t.size(); ++k) p.delta[k] = p.t[k + 1] - p.t[k];
    p.delta.back() = p.t.size() > 1 ? p.delta[p.t.size() - 2] : 0.0;
    rows.push_back(std::move(p));
  }
  return rows;
}

inline void write_profiles(std::ostream& out, std::span<const DensityProfile> rows) {
  for (const auto& p : rows) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (k) out << ',';
      out << format_number(p.t[k]) << ':' << format_number(p.sigma[k]);
    }
    out << '\n';
  }
}

/// Stacked line charts, one panel per profile: the input density in red
/// and the corrected density in blue, sharing a per-panel vertical scale.
inline Image plot_profiles(std::span<const DensityProfile> before, std::span<const DensityProfile> after,
                           std::uint32_t panel_width = 480, std::uint32_t panel_height = 160) {
  const std::size_t panels = std::min<std::size_t>(before.size(), 16);
  const std::uint32_t height = static_cast<std::uint32_t>(std::max<std::size_t>(1, panels)) * panel_height;
  Image img(panel_width, height, Rgb{1.0, 1.0, 1.0});
  auto line = [&](int x0, int y0, int x1, int y1, const Rgb& c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      if (x0 >= 0 && y0 >= 0 && x0 < int(img.width()) && y0 < int(img.height())) img.set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  };
  const int margin = 8;
  for (std::size_t p = 0; p < panels; ++p) {
    const int top = static_cast<int>(p * panel_height);
    const int base = top + static_cast<int>(panel_height) - margin;
    line(margin, base, int(panel_width) - margin, base, {0.6, 0.6, 0.6});
    const auto& b = before[p];
    if (b.size() < 1) continue;
    double peak = 0.0;
    for (double s : b.sigma) peak = std::max(peak, s);
    if (peak <= 0.0) peak = 1.0;
    const double t0 = b.t.front();
    const double span = b.size() > 1 ? b.t.back() - t0 : 1.0;
    auto px = [&](std::size_t k) { return margin + int(std::lround((b.t[k] - t0) / span * (panel_width - 2 * margin))); };
    auto py = [&](double s) { return base - int(std::lround(s / peak * (panel_height - 2 * margin))); };
    for (const auto* prof : {&b, &after[p]}) {
      const Rgb color = prof == &b ? Rgb{0.85, 0.2, 0.2} : Rgb{0.15, 0.3, 0.85};
      for (std::size_t k = 0; k + 1 < prof->size(); ++k) {
        line(px(k), py(prof->sigma[k]), px(k + 1), py(prof->sigma[k + 1]), color);
      }
    }
  }
  return img;
}

}  // namespace cleanfield

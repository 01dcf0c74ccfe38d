#include "ctlab/volume.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "payloads are little-endian; big-endian hosts are unsupported");

namespace ctlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string stem_of(const std::string& path) {
  if (path.size() > 5 && path.ends_with(".json"))
    return path.substr(0, path.size() - 5);
  if (path.size() > 4 && path.ends_with(".raw"))
    return path.substr(0, path.size() - 4);
  return path;
}

void check_finite(const std::vector<float>& data, const std::string& what) {
  for (float v : data) {
    if (!std::isfinite(v))
      throw std::runtime_error(what + ": non-finite element");
  }
}

void write_raw(const std::string& path, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<float> read_raw(const std::string& path,
                            std::int64_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open: " + path);
  const std::int64_t bytes = static_cast<std::int64_t>(in.tellg());
  if (bytes != expected_count * static_cast<std::int64_t>(sizeof(float)))
    throw std::runtime_error("payload size mismatch: " + path + " has " +
                             std::to_string(bytes) + " bytes, header declares " +
                             std::to_string(expected_count) + " f32 elements");
  in.seekg(0);
  std::vector<float> data(static_cast<std::size_t>(expected_count));
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (!in) throw std::runtime_error("read failed: " + path);
  return data;
}

nlohmann::json load_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed header " + path + ": " + e.what());
  }
  return j;
}

Shape3 parse_shape(const nlohmann::json& j, const std::string& path) {
  if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 3)
    throw std::runtime_error("malformed header " + path + ": bad shape");
  Shape3 shape{};
  for (int i = 0; i < 3; ++i) {
    shape[i] = j["shape"][i].get<std::int64_t>();
    if (shape[i] < 1)
      throw std::runtime_error("malformed header " + path +
                               ": shape component < 1");
  }
  if (j.value("dtype", "") != "f32le")
    throw std::runtime_error("malformed header " + path + ": dtype not f32le");
  if (j.value("order", "") != "zyx")
    throw std::runtime_error("malformed header " + path + ": order not zyx");
  return shape;
}

}  // namespace

ProjectionGeometry make_parallel_geometry(int num_angles, int num_detectors,
                                          double detector_spacing) {
  if (num_angles < 1 || num_detectors < 1)
    throw std::invalid_argument("geometry needs at least one angle/detector");
  ProjectionGeometry g;
  g.num_angles = num_angles;
  g.num_detectors = num_detectors;
  g.detector_spacing = detector_spacing;
  g.angles.resize(static_cast<std::size_t>(num_angles));
  for (int a = 0; a < num_angles; ++a)
    g.angles[static_cast<std::size_t>(a)] = kPi * a / num_angles;
  return g;
}

void save_volume(const Volume3& v, const std::string& path) {
  if (v.shape[0] < 1 || v.shape[1] < 1 || v.shape[2] < 1)
    throw std::invalid_argument("save_volume: shape components must be >= 1");
  if (static_cast<std::int64_t>(v.data.size()) != v.size())
    throw std::invalid_argument("save_volume: data size does not match shape");
  check_finite(v.data, "save_volume");
  const std::string stem = stem_of(path);
  nlohmann::json j;
  j["shape"] = {v.shape[0], v.shape[1], v.shape[2]};
  j["dtype"] = "f32le";
  j["order"] = "zyx";
  j["spacing_mm"] = {v.spacing_mm[0], v.spacing_mm[1], v.spacing_mm[2]};
  std::ofstream out(stem + ".json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + stem + ".json");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + stem + ".json");
  write_raw(stem + ".raw", v.data);
}

Volume3 load_volume(const std::string& path) {
  const std::string stem = stem_of(path);
  const nlohmann::json j = load_sidecar(stem + ".json");
  Volume3 v;
  v.shape = parse_shape(j, stem + ".json");
  if (j.contains("spacing_mm")) {
    for (int i = 0; i < 3; ++i) v.spacing_mm[i] = j["spacing_mm"][i].get<double>();
  }
  v.data = read_raw(stem + ".raw", v.size());
  check_finite(v.data, "load_volume " + stem);
  return v;
}

void save_sinogram(const SinogramStack& s, const std::string& path) {
  if (s.num_slices < 1) throw std::invalid_argument("save_sinogram: empty stack");
  check_finite(s.data, "save_sinogram");
  const std::string stem = stem_of(path);
  nlohmann::json j;
  j["shape"] = {s.num_slices, s.geometry.num_angles, s.geometry.num_detectors};
  j["dtype"] = "f32le";
  j["order"] = "zyx";
  j["spacing_mm"] = {1.0, 1.0, 1.0};
  j["geometry"] = {{"num_angles", s.geometry.num_angles},
                   {"num_detectors", s.geometry.num_detectors},
                   {"detector_spacing", s.geometry.detector_spacing}};
  std::ofstream out(stem + ".json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + stem + ".json");
  out << j.dump(2) << "\n";
  write_raw(stem + ".raw", s.data);
}

SinogramStack load_sinogram(const std::string& path) {
  const std::string stem = stem_of(path);
  const nlohmann::json j = load_sidecar(stem + ".json");
  const Shape3 shape = parse_shape(j, stem + ".json");
  if (!j.contains("geometry"))
    throw std::runtime_error("malformed header " + stem +
                             ".json: missing geometry");
  const auto& jg = j["geometry"];
  SinogramStack s(shape[0],
                  make_parallel_geometry(jg["num_angles"].get<int>(),
                                         jg["num_detectors"].get<int>(),
                                         jg["detector_spacing"].get<double>()));
  if (shape[1] != s.geometry.num_angles || shape[2] != s.geometry.num_detectors)
    throw std::runtime_error("malformed header " + stem +
                             ".json: shape disagrees with geometry");
  s.data = read_raw(stem + ".raw", s.size());
  check_finite(s.data, "load_sinogram " + stem);
  return s;
}

Shape3 crop_center_offsets(const Shape3& shape, const Shape3& target) {
  Shape3 off{};
  for (int i = 0; i < 3; ++i) {
    if (target[i] < 1 || target[i] > shape[i])
      throw std::invalid_argument("crop_center: target exceeds shape");
    off[i] = (shape[i] - target[i]) / 2;  // extra voxel stays high-side
  }
  return off;
}

Volume3 crop_center(const Volume3& v, const Shape3& target) {
  const Shape3 off = crop_center_offsets(v.shape, target);
  Volume3 out(target[0], target[1], target[2]);
  out.spacing_mm = v.spacing_mm;
  for (std::int64_t z = 0; z < target[0]; ++z)
    for (std::int64_t y = 0; y < target[1]; ++y) {
      const float* src = &v.data[static_cast<std::size_t>(
          ((z + off[0]) * v.shape[1] + (y + off[1])) * v.shape[2] + off[2])];
      float* dst = &out.at(z, y, 0);
      for (std::int64_t x = 0; x < target[2]; ++x) dst[x] = src[x];
    }
  return out;
}

std::vector<std::pair<Shape3, Volume3>> patch_volume(const Volume3& v,
                                                     const Shape3& patch) {
  for (int i = 0; i < 3; ++i) {
    if (patch[i] < 1 || v.shape[i] % patch[i] != 0)
      throw std::invalid_argument(
          "patch_volume: shape not divisible by patch size");
  }
  std::vector<std::pair<Shape3, Volume3>> out;
  for (std::int64_t oz = 0; oz < v.shape[0]; oz += patch[0])
    for (std::int64_t oy = 0; oy < v.shape[1]; oy += patch[1])
      for (std::int64_t ox = 0; ox < v.shape[2]; ox += patch[2]) {
        Volume3 p(patch[0], patch[1], patch[2]);
        p.spacing_mm = v.spacing_mm;
        for (std::int64_t z = 0; z < patch[0]; ++z)
          for (std::int64_t y = 0; y < patch[1]; ++y) {
            const float* src = &v.data[static_cast<std::size_t>(
                (((oz + z) * v.shape[1]) + (oy + y)) * v.shape[2] + ox)];
            float* dst = &p.at(z, y, 0);
            for (std::int64_t x = 0; x < patch[2]; ++x) dst[x] = src[x];
          }
        out.emplace_back(Shape3{oz, oy, ox}, std::move(p));
      }
  return out;
}

}  // namespace ctlab

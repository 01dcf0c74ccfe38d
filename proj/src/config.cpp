#include "ctlab/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ctlab {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad number: " + v);
  return d;
}

std::int64_t to_int(const std::string& v) {
  std::size_t pos = 0;
  const long long i = std::stoll(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad integer: " + v);
  return i;
}

std::uint64_t to_u64(const std::string& v) {
  std::size_t pos = 0;
  const unsigned long long i = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad integer: " + v);
  return i;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("bad boolean: " + v);
}

Shape3 to_shape(const std::string& v) {
  std::istringstream iss(v);
  Shape3 s{};
  if (!(iss >> s[0] >> s[1] >> s[2])) throw std::invalid_argument("bad triple: " + v);
  std::string rest;
  if (iss >> rest) throw std::invalid_argument("bad triple: " + v);
  return s;
}

std::string fmt_double(double d) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

std::string fmt_shape(const Shape3& s) {
  return std::to_string(s[0]) + " " + std::to_string(s[1]) + " " +
         std::to_string(s[2]);
}

struct Field {
  std::string section, key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::vector<Field> schema() {
  std::vector<Field> f;
  const auto add = [&](const char* sec, const char* key,
                       std::function<std::string(const ExperimentConfig&)> get,
                       std::function<void(ExperimentConfig&, const std::string&)>
                           set) {
    f.push_back({sec, key, std::move(get), std::move(set)});
  };

  add("phantom", "shape",
      [](const ExperimentConfig& c) { return fmt_shape(c.phantom.shape); },
      [](ExperimentConfig& c, const std::string& v) { c.phantom.shape = to_shape(v); });
  add("phantom", "count_mean",
      [](const ExperimentConfig& c) { return fmt_double(c.phantom.count_mean); },
      [](ExperimentConfig& c, const std::string& v) { c.phantom.count_mean = to_double(v); });
  add("phantom", "count_cap",
      [](const ExperimentConfig& c) { return std::to_string(c.phantom.count_cap); },
      [](ExperimentConfig& c, const std::string& v) { c.phantom.count_cap = static_cast<int>(to_int(v)); });
  add("phantom", "intensity_range",
      [](const ExperimentConfig& c) {
        return fmt_double(c.phantom.intensity_range[0]) + " " +
               fmt_double(c.phantom.intensity_range[1]);
      },
      [](ExperimentConfig& c, const std::string& v) {
        std::istringstream iss(v);
        if (!(iss >> c.phantom.intensity_range[0] >> c.phantom.intensity_range[1]))
          throw std::invalid_argument("bad pair: " + v);
      });
  add("phantom", "axis_range",
      [](const ExperimentConfig& c) {
        return fmt_double(c.phantom.axis_range[0]) + " " +
               fmt_double(c.phantom.axis_range[1]);
      },
      [](ExperimentConfig& c, const std::string& v) {
        std::istringstream iss(v);
        if (!(iss >> c.phantom.axis_range[0] >> c.phantom.axis_range[1]))
          throw std::invalid_argument("bad pair: " + v);
      });
  add("phantom", "center_range",
      [](const ExperimentConfig& c) { return fmt_double(c.phantom.center_range); },
      [](ExperimentConfig& c, const std::string& v) { c.phantom.center_range = to_double(v); });
  add("phantom", "seed",
      [](const ExperimentConfig& c) { return std::to_string(c.phantom.seed); },
      [](ExperimentConfig& c, const std::string& v) { c.phantom.seed = to_u64(v); });
  add("phantom", "n_train",
      [](const ExperimentConfig& c) { return std::to_string(c.split.n_train); },
      [](ExperimentConfig& c, const std::string& v) { c.split.n_train = static_cast<int>(to_int(v)); });
  add("phantom", "n_val",
      [](const ExperimentConfig& c) { return std::to_string(c.split.n_val); },
      [](ExperimentConfig& c, const std::string& v) { c.split.n_val = static_cast<int>(to_int(v)); });
  add("phantom", "n_test",
      [](const ExperimentConfig& c) { return std::to_string(c.split.n_test); },
      [](ExperimentConfig& c, const std::string& v) { c.split.n_test = static_cast<int>(to_int(v)); });

  add("geometry", "views",
      [](const ExperimentConfig& c) { return std::to_string(c.views); },
      [](ExperimentConfig& c, const std::string& v) { c.views = static_cast<int>(to_int(v)); });
  add("geometry", "detectors",
      [](const ExperimentConfig& c) { return std::to_string(c.detectors); },
      [](ExperimentConfig& c, const std::string& v) { c.detectors = static_cast<int>(to_int(v)); });
  add("geometry", "detector_spacing",
      [](const ExperimentConfig& c) { return fmt_double(c.detector_spacing); },
      [](ExperimentConfig& c, const std::string& v) { c.detector_spacing = to_double(v); });

  add("noise", "snr_db",
      [](const ExperimentConfig& c) {
        return c.noise.none ? std::string("none") : fmt_double(c.noise.snr_db);
      },
      [](ExperimentConfig& c, const std::string& v) {
        if (v == "none") {
          c.noise.none = true;
        } else {
          c.noise.none = false;
          c.noise.snr_db = to_double(v);
        }
      });
  add("noise", "seed",
      [](const ExperimentConfig& c) { return std::to_string(c.noise.seed); },
      [](ExperimentConfig& c, const std::string& v) { c.noise.seed = to_u64(v); });
  add("noise", "per_slice_power",
      [](const ExperimentConfig& c) {
        return c.noise.per_slice_power ? "true" : "false";
      },
      [](ExperimentConfig& c, const std::string& v) { c.noise.per_slice_power = to_bool(v); });

  add("filter", "kind",
      [](const ExperimentConfig& c) { return to_string(c.filter.kind); },
      [](ExperimentConfig& c, const std::string& v) { c.filter.kind = filter_kind_from_string(v); });
  add("filter", "freq_scale",
      [](const ExperimentConfig& c) { return fmt_double(c.filter.frequency_scaling); },
      [](ExperimentConfig& c, const std::string& v) { c.filter.frequency_scaling = to_double(v); });

  add("model", "dims",
      [](const ExperimentConfig& c) { return std::to_string(c.model.dims); },
      [](ExperimentConfig& c, const std::string& v) { c.model.dims = static_cast<int>(to_int(v)); });
  add("model", "depth",
      [](const ExperimentConfig& c) { return std::to_string(c.model.depth); },
      [](ExperimentConfig& c, const std::string& v) { c.model.depth = static_cast<int>(to_int(v)); });
  add("model", "base_filters",
      [](const ExperimentConfig& c) { return std::to_string(c.model.base_filters); },
      [](ExperimentConfig& c, const std::string& v) { c.model.base_filters = static_cast<int>(to_int(v)); });
  add("model", "global_residual",
      [](const ExperimentConfig& c) { return c.model.global_residual ? "true" : "false"; },
      [](ExperimentConfig& c, const std::string& v) { c.model.global_residual = to_bool(v); });
  add("model", "leaky_slope",
      [](const ExperimentConfig& c) { return fmt_double(c.model.leaky_slope); },
      [](ExperimentConfig& c, const std::string& v) { c.model.leaky_slope = to_double(v); });
  add("model", "bn_eps",
      [](const ExperimentConfig& c) { return fmt_double(c.model.bn_eps); },
      [](ExperimentConfig& c, const std::string& v) { c.model.bn_eps = to_double(v); });
  add("model", "bn_momentum",
      [](const ExperimentConfig& c) { return fmt_double(c.model.bn_momentum); },
      [](ExperimentConfig& c, const std::string& v) { c.model.bn_momentum = to_double(v); });

  add("train", "lr",
      [](const ExperimentConfig& c) { return fmt_double(c.train.lr); },
      [](ExperimentConfig& c, const std::string& v) { c.train.lr = to_double(v); });
  add("train", "beta1",
      [](const ExperimentConfig& c) { return fmt_double(c.train.beta1); },
      [](ExperimentConfig& c, const std::string& v) { c.train.beta1 = to_double(v); });
  add("train", "beta2",
      [](const ExperimentConfig& c) { return fmt_double(c.train.beta2); },
      [](ExperimentConfig& c, const std::string& v) { c.train.beta2 = to_double(v); });
  add("train", "adam_eps",
      [](const ExperimentConfig& c) { return fmt_double(c.train.adam_eps); },
      [](ExperimentConfig& c, const std::string& v) { c.train.adam_eps = to_double(v); });
  add("train", "batch_size",
      [](const ExperimentConfig& c) { return std::to_string(c.train.batch_size); },
      [](ExperimentConfig& c, const std::string& v) { c.train.batch_size = static_cast<int>(to_int(v)); });
  add("train", "batch_size_2d",
      [](const ExperimentConfig& c) { return std::to_string(c.batch_size_2d); },
      [](ExperimentConfig& c, const std::string& v) { c.batch_size_2d = static_cast<int>(to_int(v)); });
  add("train", "max_epochs",
      [](const ExperimentConfig& c) { return std::to_string(c.train.max_epochs); },
      [](ExperimentConfig& c, const std::string& v) { c.train.max_epochs = static_cast<int>(to_int(v)); });
  add("train", "seed",
      [](const ExperimentConfig& c) { return std::to_string(c.train.seed); },
      [](ExperimentConfig& c, const std::string& v) { c.train.seed = to_u64(v); });
  add("train", "checkpoint_every",
      [](const ExperimentConfig& c) { return std::to_string(c.train.checkpoint_every); },
      [](ExperimentConfig& c, const std::string& v) { c.train.checkpoint_every = static_cast<int>(to_int(v)); });
  add("train", "early_stop_patience",
      [](const ExperimentConfig& c) { return std::to_string(c.train.early_stop_patience); },
      [](ExperimentConfig& c, const std::string& v) { c.train.early_stop_patience = static_cast<int>(to_int(v)); });

  add("stitch", "block",
      [](const ExperimentConfig& c) { return fmt_shape(c.stitch_block); },
      [](ExperimentConfig& c, const std::string& v) { c.stitch_block = to_shape(v); });
  add("stitch", "margin",
      [](const ExperimentConfig& c) { return fmt_shape(c.stitch_margin); },
      [](ExperimentConfig& c, const std::string& v) { c.stitch_margin = to_shape(v); });

  add("paths", "data_root",
      [](const ExperimentConfig& c) { return c.data_root; },
      [](ExperimentConfig& c, const std::string& v) { c.data_root = v; });

  return f;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  const std::vector<Field> fields = schema();
  ExperimentConfig cfg;
  std::istringstream iss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(iss, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : fields) known = known || f.section == section;
      if (!known)
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    bool matched = false;
    for (const auto& f : fields) {
      if (f.section == section && f.key == key) {
        try {
          f.set(cfg, value);
        } catch (const std::exception& e) {
          throw std::invalid_argument("config line " + std::to_string(lineno) +
                                      " (" + section + "." + key + "): " +
                                      e.what());
        }
        matched = true;
        break;
      }
    }
    if (!matched)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": unknown key " + section + "." + key);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string render_config(const ExperimentConfig& c) {
  std::string out;
  std::string section;
  for (const auto& f : schema()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

const char* paper_synthetic_preset() {
  static const std::string preset = render_config(ExperimentConfig{});
  return preset.c_str();
}

}  // namespace ctlab

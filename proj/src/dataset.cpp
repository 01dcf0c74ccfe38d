#include "ctlab/dataset.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ctlab {

void save_pairs(const PairedDataset& d, const std::string& path) {
  nlohmann::json j;
  const auto dump = [](const std::vector<SamplePair>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : v)
      arr.push_back({{"input", p.input}, {"target", p.target}});
    return arr;
  };
  j["train"] = dump(d.train);
  j["val"] = dump(d.val);
  j["test"] = dump(d.test);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

PairedDataset load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed pairs file " + path + ": " + e.what());
  }
  PairedDataset d;
  const auto parse = [&](const char* key, std::vector<SamplePair>& v) {
    if (!j.contains(key)) return;
    for (const auto& e : j[key])
      v.push_back({e.at("input").get<std::string>(),
                   e.at("target").get<std::string>()});
  };
  parse("train", d.train);
  parse("val", d.val);
  parse("test", d.test);
  return d;
}

Shape3 volume_shape(const std::string& stem) {
  std::ifstream in(stem + ".json");
  if (!in) throw std::runtime_error("cannot open " + stem + ".json");
  nlohmann::json j;
  in >> j;
  const auto s = j.at("shape").get<std::vector<std::int64_t>>();
  if (s.size() != 3) throw std::runtime_error("bad shape in " + stem + ".json");
  return {s[0], s[1], s[2]};
}

}  // namespace ctlab

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsc/common.hpp"
#include "bsc/nn/layers.hpp"

namespace bsc {

// Versioned checkpoint container shared by the segmenter, backbones and the
// counting models: a json descriptor followed by named float64 arrays.
//
//   "BSCKPT01" | u64 json_len | json | raw little-endian f64 data
//
// The descriptor carries the architecture/config snapshot under "meta" and a
// tensor index (name, shape, offset into the data section). Readers look
// tensors up by name, so fields can be added without breaking old files.
class Checkpoint {
 public:
  nlohmann::json meta;
  std::string kind;

  void add(const std::string& name, std::vector<int> shape, std::vector<double> data) {
    std::size_t total = 1;
    for (const int d : shape) total *= static_cast<std::size_t>(d);
    require_or<ShapeError>(total == data.size(), "checkpoint tensor " + name + ": shape/data mismatch");
    require_or<Error>(!tensors_.count(name), "checkpoint tensor " + name + ": duplicate name");
    order_.push_back(name);
    tensors_[name] = {std::move(shape), std::move(data)};
  }

  template <typename T>
  void add_param(const nn::ParamTensor<T>& p, const std::string& prefix = "") {
    std::vector<double> data(p.value.begin(), p.value.end());
    add(prefix + p.name, p.shape, std::move(data));
  }

  bool has(const std::string& name) const { return tensors_.count(name) != 0; }

  const std::vector<double>& data(const std::string& name) const {
    const auto it = tensors_.find(name);
    require_or<Error>(it != tensors_.end(), "checkpoint: missing tensor " + name);
    return it->second.second;
  }

  const std::vector<int>& shape(const std::string& name) const {
    const auto it = tensors_.find(name);
    require_or<Error>(it != tensors_.end(), "checkpoint: missing tensor " + name);
    return it->second.first;
  }

  template <typename T>
  void load_param(nn::ParamTensor<T>& p, const std::string& prefix = "") const {
    const auto& d = data(prefix + p.name);
    require_or<ShapeError>(d.size() == p.value.size(),
                           "checkpoint tensor " + prefix + p.name + ": size mismatch");
    for (std::size_t i = 0; i < d.size(); ++i) p.value[i] = static_cast<T>(d[i]);
  }

  std::vector<std::string> names() const { return order_; }

  void save(const std::string& path) const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["kind"] = kind;
    j["meta"] = meta;
    auto& idx = j["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& name : order_) {
      const auto& [shape, data] = tensors_.at(name);
      idx.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"count", data.size()}});
      offset += data.size();
    }
    const std::string js = j.dump();
    std::ofstream f(path, std::ios::binary);
    require_or<IoError>(f.good(), "cannot open for writing: " + path);
    f.write("BSCKPT01", 8);
    const std::uint64_t len = js.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(js.data(), static_cast<std::streamsize>(js.size()));
    for (const auto& name : order_) {
      const auto& data = tensors_.at(name).second;
      f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * 8));
    }
    require_or<IoError>(f.good(), "short write: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require_or<IoError>(f.good(), "cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    require_or<ParseError>(f.gcount() == 8 && std::string(magic, 8) == "BSCKPT01",
                           path + ": not a bsc checkpoint");
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string js(len, '\0');
    f.read(js.data(), static_cast<std::streamsize>(len));
    require_or<ParseError>(f.good(), path + ": truncated descriptor");
    nlohmann::json j = nlohmann::json::parse(js);
    require_or<ParseError>(j.value("format_version", 0) == 1, path + ": unsupported checkpoint version");
    Checkpoint ck;
    ck.kind = j.value("kind", "");
    ck.meta = j.value("meta", nlohmann::json::object());
    for (const auto& t : j["tensors"]) {
      const std::string name = t["name"];
      std::vector<int> shape = t["shape"].get<std::vector<int>>();
      std::vector<double> data(t["count"].get<std::size_t>());
      f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 8));
      require_or<ParseError>(f.gcount() == static_cast<std::streamsize>(data.size() * 8),
                             path + ": truncated tensor " + name);
      ck.add(name, std::move(shape), std::move(data));
    }
    return ck;
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> tensors_;
};

}  // namespace bsc

#include "unigs/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include "json.hpp"

namespace unigs {

using nlohmann::json;

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& meta_json) {
  json manifest;
  manifest["meta"] = json::parse(meta_json);
  manifest["tensors"] = json::array();
  for (const auto& [name, t] : tensors) {
    json e;
    e["name"] = name;
    e["shape"] = t.shape();
    manifest["tensors"].push_back(e);
  }
  std::string m = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f << kCkptMagic << "\n";
  std::uint64_t len = m.size();
  unsigned char lenb[8];
  for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>(len >> (8 * i));
  f.write(reinterpret_cast<const char*>(lenb), 8);
  f.write(m.data(), static_cast<std::streamsize>(m.size()));
  std::vector<float> buf;
  for (const auto& [name, t] : tensors) {
    (void)name;
    buf.resize(static_cast<size_t>(t.numel()));
    for (long i = 0; i < t.numel(); ++i)
      buf[static_cast<size_t>(i)] = static_cast<float>(t.data()[static_cast<size_t>(i)]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed " + path);
}

const Tensor& Checkpoint::at(const std::string& name) const {
  auto it = tensors.find(name);
  require(it != tensors.end(), "Checkpoint: missing tensor " + name);
  return it->second;
}

std::vector<std::pair<std::string, Tensor>> Checkpoint::items() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [k, v] : tensors) out.emplace_back(k, v);
  return out;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string magic;
  std::getline(f, magic);
  require(magic == kCkptMagic,
          "load_checkpoint: bad magic '" + magic + "' in " + path);
  unsigned char lenb[8];
  f.read(reinterpret_cast<char*>(lenb), 8);
  if (!f) throw std::runtime_error("load_checkpoint: truncated header");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(lenb[i]) << (8 * i);
  std::string m(len, '\0');
  f.read(m.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("load_checkpoint: truncated manifest");
  json manifest = json::parse(m);
  Checkpoint ck;
  ck.meta_json = manifest.value("meta", json::object()).dump();
  for (const auto& e : manifest.at("tensors")) {
    std::string name = e.at("name");
    Shape shape = e.at("shape").get<Shape>();
    long n = numel_of(shape);
    std::vector<float> buf(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f)
      throw std::runtime_error("load_checkpoint: truncated payload for " +
                               name);
    std::vector<double> d(buf.begin(), buf.end());
    ck.tensors.emplace(name, Tensor::from_data(shape, std::move(d)));
  }
  return ck;
}

}  // namespace unigs

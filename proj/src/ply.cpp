#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "unigs/gaussians.hpp"

namespace unigs {

namespace {

const char* kProps[] = {"x",       "y",       "z",       "opacity", "scale_0",
                        "scale_1", "scale_2", "rot_0",   "rot_1",   "rot_2",
                        "rot_3",   "f_dc_0",  "f_dc_1",  "f_dc_2",  "f_rest_0",
                        "f_rest_1", "f_rest_2", "f_rest_3", "f_rest_4",
                        "f_rest_5", "f_rest_6", "f_rest_7", "f_rest_8"};
constexpr int kNumProps = 23;

// column index in the 23-float record for each tensor slot
void row_to_record(const RawGaussianParams& g, long i, float* rec) {
  auto f = [](double v) { return static_cast<float>(v); };
  for (int k = 0; k < 3; ++k) rec[k] = f(g.mu.data()[static_cast<size_t>(3 * i + k)]);
  rec[3] = f(g.opacity.data()[static_cast<size_t>(i)]);
  for (int k = 0; k < 3; ++k)
    rec[4 + k] = f(g.scale.data()[static_cast<size_t>(3 * i + k)]);
  for (int k = 0; k < 4; ++k)
    rec[7 + k] = f(g.rotation.data()[static_cast<size_t>(4 * i + k)]);
  const double* sh = g.sh.data().data() + 12 * i;
  rec[11] = f(sh[0]);
  rec[12] = f(sh[4]);
  rec[13] = f(sh[8]);
  // f_rest is channel-major: three band-1 coeffs for R, then G, then B
  for (int ch = 0; ch < 3; ++ch)
    for (int k = 0; k < 3; ++k) rec[14 + 3 * ch + k] = f(sh[4 * ch + 1 + k]);
}

void record_to_row(const float* rec, RawGaussianParams& g, long i) {
  for (int k = 0; k < 3; ++k) g.mu.data()[static_cast<size_t>(3 * i + k)] = rec[k];
  g.opacity.data()[static_cast<size_t>(i)] = rec[3];
  for (int k = 0; k < 3; ++k)
    g.scale.data()[static_cast<size_t>(3 * i + k)] = rec[4 + k];
  for (int k = 0; k < 4; ++k)
    g.rotation.data()[static_cast<size_t>(4 * i + k)] = rec[7 + k];
  double* sh = g.sh.data().data() + 12 * i;
  sh[0] = rec[11];
  sh[4] = rec[12];
  sh[8] = rec[13];
  for (int ch = 0; ch < 3; ++ch)
    for (int k = 0; k < 3; ++k) sh[4 * ch + 1 + k] = rec[14 + 3 * ch + k];
}

}  // namespace

void save_ply(const std::string& path, const RawGaussianParams& g) {
  long n = g.count();
  require(n > 0, "save_ply: empty gaussian set");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_ply: cannot open " + path);
  f << "ply\nformat binary_little_endian 1.0\nelement vertex " << n << "\n";
  for (const char* p : kProps) f << "property float " << p << "\n";
  f << "end_header\n";
  std::vector<float> rec(kNumProps);
  for (long i = 0; i < n; ++i) {
    row_to_record(g, i, rec.data());
    f.write(reinterpret_cast<const char*>(rec.data()),
            kNumProps * sizeof(float));
  }
  if (!f) throw std::runtime_error("save_ply: write failed for " + path);
}

RawGaussianParams load_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_ply: cannot open " + path);
  std::string line;
  std::getline(f, line);
  require(line == "ply", "load_ply: not a ply file: " + path);
  std::getline(f, line);
  require(line == "format binary_little_endian 1.0",
          "load_ply: unsupported format: " + line);
  long n = -1;
  std::vector<std::string> props;
  while (std::getline(f, line)) {
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "comment") continue;
    if (tok == "element") {
      std::string name;
      ss >> name >> n;
      require(name == "vertex", "load_ply: unexpected element " + name);
    } else if (tok == "property") {
      std::string type, name;
      ss >> type >> name;
      require(type == "float", "load_ply: property " + name +
                                   " must be float, got " + type);
      props.push_back(name);
    }
  }
  require(n >= 0, "load_ply: missing vertex element");
  // column of each required property in the on-disk record
  std::vector<int> col(kNumProps, -1);
  for (int k = 0; k < kNumProps; ++k) {
    for (size_t j = 0; j < props.size(); ++j)
      if (props[j] == kProps[k]) col[static_cast<size_t>(k)] = static_cast<int>(j);
    require(col[static_cast<size_t>(k)] >= 0,
            std::string("load_ply: missing property ") + kProps[k]);
  }
  RawGaussianParams g = make_raw_gaussians(n);
  std::vector<float> disk(props.size());
  std::vector<float> rec(kNumProps);
  for (long i = 0; i < n; ++i) {
    f.read(reinterpret_cast<char*>(disk.data()),
           static_cast<std::streamsize>(disk.size() * sizeof(float)));
    if (!f)
      throw std::runtime_error("load_ply: truncated data at vertex " +
                               std::to_string(i));
    for (int k = 0; k < kNumProps; ++k)
      rec[static_cast<size_t>(k)] = disk[static_cast<size_t>(col[static_cast<size_t>(k)])];
    record_to_row(rec.data(), g, i);
  }
  return g;
}

}  // namespace unigs

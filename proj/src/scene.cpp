#include "unigs/scene.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "unigs/common.hpp"
#include "unigs/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace unigs {
namespace {

// Accepts either a nested [[..],[..],..] matrix or a flat list of n*n
// values, row-major.
std::vector<double> parse_matrix(const json& j, long n, const char* what) {
  std::vector<double> out;
  if (!j.is_array()) throw ContractError(std::string(what) + ": not an array");
  if (!j.empty() && j.front().is_array()) {
    for (const json& row : j)
      for (const json& v : row) out.push_back(v.get<double>());
  } else {
    for (const json& v : j) out.push_back(v.get<double>());
  }
  if (static_cast<long>(out.size()) != n * n)
    throw ContractError(std::string(what) + ": expected " +
                        std::to_string(n * n) + " values, got " +
                        std::to_string(out.size()));
  return out;
}

json matrix_json(const double* m, long n) {
  json rows = json::array();
  for (long r = 0; r < n; ++r) {
    json row = json::array();
    for (long c = 0; c < n; ++c) row.push_back(m[r * n + c]);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::vector<long> Scene::input_indices() const {
  std::vector<long> idx;
  for (long i = 0; i < static_cast<long>(views.size()); ++i)
    if (views[static_cast<size_t>(i)].split == "input") idx.push_back(i);
  return idx;
}

std::vector<long> Scene::heldout_indices() const {
  std::vector<long> idx;
  for (long i = 0; i < static_cast<long>(views.size()); ++i)
    if (views[static_cast<size_t>(i)].split == "held-out") idx.push_back(i);
  return idx;
}

std::vector<Camera> Scene::cameras(const std::vector<long>& idx) const {
  std::vector<Camera> cams;
  for (long i : idx) cams.push_back(views.at(static_cast<size_t>(i)).cam);
  return cams;
}

Scene load_scene(const std::string& dir) {
  const fs::path root(dir);
  const fs::path jpath = root / "cameras.json";
  std::ifstream in(jpath);
  if (!in) throw ContractError("load_scene: cannot open " + jpath.string());

  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ContractError("load_scene: malformed " + jpath.string() + ": " +
                        e.what());
  }
  if (!j.contains("views") || !j["views"].is_array() || j["views"].empty())
    throw ContractError("load_scene: " + jpath.string() +
                        " needs a non-empty \"views\" array");

  Scene scene;
  scene.dir = root.string();
  std::vector<Camera> cams;
  long iw = -1, ih = -1;
  for (const json& jv : j["views"]) {
    SceneView view;
    try {
      view.image = jv.at("image").get<std::string>();
      if (jv.contains("mask")) view.mask = jv["mask"].get<std::string>();
      if (jv.contains("split")) view.split = jv["split"].get<std::string>();
      if (view.split != "input" && view.split != "held-out")
        throw ContractError("unknown split tag \"" + view.split + "\"");

      const fs::path img = root / view.image;
      if (!fs::exists(img))
        throw ContractError("missing image " + img.string());
      auto [w, h] = png_size(img.string());
      if (iw < 0) {
        iw = w;
        ih = h;
      } else if (w != iw || h != ih) {
        throw ContractError("inconsistent resolutions: " + view.image +
                            " is " + std::to_string(w) + "x" +
                            std::to_string(h) + ", expected " +
                            std::to_string(iw) + "x" + std::to_string(ih));
      }
      if (!view.mask.empty() && !fs::exists(root / view.mask))
        throw ContractError("missing mask " + (root / view.mask).string());

      Camera cam;
      cam.K.m = [&] {
        auto v = parse_matrix(jv.at("K"), 3, "K");
        std::array<double, 9> a{};
        std::copy(v.begin(), v.end(), a.begin());
        return a;
      }();
      cam.w2c.m = [&] {
        auto v = parse_matrix(jv.at("w2c"), 4, "w2c");
        std::array<double, 16> a{};
        std::copy(v.begin(), v.end(), a.begin());
        return a;
      }();
      cam.width = iw;
      cam.height = ih;
      cam.validate();
      view.cam = cam;
    } catch (const ContractError&) {
      throw;
    } catch (const std::exception& e) {
      throw ContractError("load_scene: bad view entry: " + std::string(e.what()));
    }
    cams.push_back(view.cam);
    scene.views.push_back(std::move(view));
  }

  cams = normalize_to_reference(cams);
  for (size_t i = 0; i < cams.size(); ++i) scene.views[i].cam = cams[i];

  if (scene.input_indices().empty())
    throw ContractError("load_scene: scene has no input views");
  return scene;
}

void save_cameras(const Scene& scene) {
  json views = json::array();
  for (const SceneView& v : scene.views) {
    json jv;
    jv["image"] = v.image;
    jv["K"] = matrix_json(v.cam.K.m.data(), 3);
    jv["w2c"] = matrix_json(v.cam.w2c.m.data(), 4);
    if (!v.mask.empty()) jv["mask"] = v.mask;
    jv["split"] = v.split;
    views.push_back(std::move(jv));
  }
  json j;
  j["views"] = std::move(views);

  const fs::path jpath = fs::path(scene.dir) / "cameras.json";
  std::ofstream out(jpath);
  if (!out)
    throw ContractError("save_cameras: cannot write " + jpath.string());
  out << j.dump(2) << "\n";
}

ViewData load_view(const Scene& scene, long view) {
  const SceneView& v = scene.views.at(static_cast<size_t>(view));
  const fs::path root(scene.dir);

  ViewData d;
  PngImage img = load_png((root / v.image).string());
  d.image = img.rgb;
  const long h = d.image.dim(1), w = d.image.dim(2);

  if (!v.mask.empty()) {
    PngImage m = load_png((root / v.mask).string());
    if (m.rgb.dim(1) != h || m.rgb.dim(2) != w)
      throw ContractError("load_view: mask resolution differs from image: " +
                          v.mask);
    d.mask = Tensor::zeros({1, h, w});
    for (long i = 0; i < h * w; ++i)
      d.mask.data()[static_cast<size_t>(i)] =
          m.rgb.data()[static_cast<size_t>(i)];  // red channel
  } else if (img.has_alpha()) {
    d.mask = img.alpha;
  } else {
    d.mask = Tensor::full({1, h, w}, 1.0);
  }
  return d;
}

}  // namespace unigs

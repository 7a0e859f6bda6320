#include "cpgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "cpgan/common.hpp"

namespace cpgan {
namespace data {

namespace {

const std::vector<std::string> kVocab = {
    "a",        "the",    "an",     "and",    "is",     "are",      "there",
    "picture",  "of",     "one",    "two",    "three",  "shape",    "shapes",
    "with",     "in",     "this",   "scene",  "contains", "shows",  "above",
    "below",    "near",   "to",     "next",   "it",     "drawn",    "canvas",
    "red",      "green",  "blue",   "yellow", "purple", "cyan",     "circle",
    "square",   "triangle", "small", "large", "here"};

constexpr index_t kFirstColorId = 28;  // "red"
constexpr index_t kFirstShapeId = 34;  // "circle"

const double kSqrt3 = std::sqrt(3.0);

// Byte palette, indexed by ColorKind: corners of the RGB cube.
const std::uint8_t kPalette[kNumColors][3] = {
    {255, 0, 0},   {0, 255, 0},   {0, 0, 255},
    {255, 255, 0}, {255, 0, 255}, {0, 255, 255}};

// Largest radius per object count; keeps multi-object scenes packable with
// a clear gap for the blob detector.
double max_radius(int count) {
  return count == 1 ? 0.3 : (count == 2 ? 0.22 : 0.16);
}

bool point_in_object(const SceneObject& o, double x, double y) {
  double dx = x - o.cx, dy = y - o.cy;
  switch (o.shape) {
    case ShapeKind::kCircle:
      return dx * dx + dy * dy <= o.r * o.r;
    case ShapeKind::kSquare:
      return std::abs(dx) <= o.r && std::abs(dy) <= o.r;
    case ShapeKind::kTriangle: {
      // Upward apex at (cx, cy - r), base at cy + r/2.
      double ax = o.cx, ay = o.cy - o.r;
      double bx = o.cx - o.r * kSqrt3 / 2, by = o.cy + o.r / 2;
      double cx2 = o.cx + o.r * kSqrt3 / 2, cy2 = o.cy + o.r / 2;
      auto side = [x, y](double px, double py, double qx, double qy) {
        return (qx - px) * (y - py) - (qy - py) * (x - px);
      };
      double s1 = side(ax, ay, bx, by);
      double s2 = side(bx, by, cx2, cy2);
      double s3 = side(cx2, cy2, ax, ay);
      bool has_neg = s1 < 0 || s2 < 0 || s3 < 0;
      bool has_pos = s1 > 0 || s2 > 0 || s3 > 0;
      return !(has_neg && has_pos);
    }
  }
  return false;
}

double pair_distance(const SceneObject& a, const SceneObject& b) {
  return std::hypot(a.cx - b.cx, a.cy - b.cy);
}

bool spacing_ok(const std::vector<SceneObject>& objs, double extra_gap) {
  for (std::size_t i = 0; i < objs.size(); ++i)
    for (std::size_t j = i + 1; j < objs.size(); ++j) {
      double d = pair_distance(objs[i], objs[j]);
      if (d < 0.25) return false;
      if (d < objs[i].r + objs[j].r + extra_gap) return false;
    }
  return true;
}

double intersection_area(const BoxN& a, const BoxN& b) {
  double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return w > 0 && h > 0 ? w * h : 0.0;
}

double box_area(const BoxN& b) { return (b.x1 - b.x0) * (b.y1 - b.y0); }

double iou(const BoxN& a, const BoxN& b) {
  double inter = intersection_area(a, b);
  double uni = box_area(a) + box_area(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace

// ---- vocabulary ----

const std::vector<std::string>& vocabulary() { return kVocab; }

index_t vocab_id(const std::string& word) {
  for (std::size_t i = 0; i < kVocab.size(); ++i)
    if (kVocab[i] == word) return (index_t)i;
  fail_invalid("unknown vocabulary word: ", word);
}

const std::string& vocab_word(index_t id) {
  require(id >= 0 && id < (index_t)kVocab.size(), "vocab id ", id,
          " out of range");
  return kVocab[(std::size_t)id];
}

bool is_visual_word(index_t id) {
  return id >= kFirstColorId && id < kFirstShapeId + kNumShapes;
}

int label_of(ColorKind c, ShapeKind s) {
  return (int)c * kNumShapes + (int)s;
}

index_t color_word_id(ColorKind c) { return kFirstColorId + (index_t)c; }
index_t shape_word_id(ShapeKind s) { return kFirstShapeId + (index_t)s; }

// ---- scene sampling ----

bool scene_valid(const Scene& scene) {
  int n = (int)scene.objects.size();
  if (n < 1 || n > 3) return false;
  for (const auto& o : scene.objects) {
    if (o.r < 0.1 || o.r > 0.3) return false;
    BoxN b = object_box(o);
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > 1 || b.y1 > 1) return false;
  }
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    for (std::size_t j = i + 1; j < scene.objects.size(); ++j)
      if (pair_distance(scene.objects[i], scene.objects[j]) < 0.25)
        return false;
  return true;
}

Scene sample_scene(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "scene");
  int count = 1 + (int)rng.uniform_int(3);
  double rmax = max_radius(count);

  Scene scene;
  auto sample_objects = [&](double rcap) {
    scene.objects.clear();
    for (int i = 0; i < count; ++i) {
      SceneObject o;
      o.shape = (ShapeKind)rng.uniform_int(kNumShapes);
      o.color = (ColorKind)rng.uniform_int(kNumColors);
      o.r = rng.uniform(0.1, rcap);
      // Keep the whole bounding box inside the canvas with a hair of margin.
      double m = o.r + 0.01;
      o.cx = rng.uniform(m, 1.0 - m);
      o.cy = rng.uniform(m, 1.0 - m);
      scene.objects.push_back(o);
    }
  };

  // Stage A: full spacing (centers apart and boxes separated by a gap).
  for (int attempt = 0; attempt < 300; ++attempt) {
    sample_objects(rmax);
    if (spacing_ok(scene.objects, 0.0625)) return scene;
  }
  // Stage B: shrink radii toward the minimum and retry the full constraint.
  for (int attempt = 0; attempt < 300; ++attempt) {
    sample_objects(0.1 + 0.5 * (rmax - 0.1));
    if (spacing_ok(scene.objects, 0.0625)) return scene;
  }
  // Stage C: relax to the bare center-distance invariant.
  log_warn("sample_scene(seed=", seed,
           "): relaxed object spacing after bounded retries");
  for (;;) {
    sample_objects(0.1 + 0.25 * (rmax - 0.1));
    if (spacing_ok(scene.objects, -1.0)) return scene;
  }
}

BoxN object_box(const SceneObject& o) {
  switch (o.shape) {
    case ShapeKind::kCircle:
    case ShapeKind::kSquare:
      return {o.cx - o.r, o.cy - o.r, o.cx + o.r, o.cy + o.r};
    case ShapeKind::kTriangle: {
      double s = o.r * kSqrt3 / 2;
      return {o.cx - s, o.cy - o.r, o.cx + s, o.cy + o.r / 2};
    }
  }
  fail_runtime("unreachable shape kind");
}

double object_area(const SceneObject& o) {
  switch (o.shape) {
    case ShapeKind::kCircle:
      return M_PI * o.r * o.r;
    case ShapeKind::kSquare:
      return 4.0 * o.r * o.r;
    case ShapeKind::kTriangle:
      return 3.0 * kSqrt3 / 4.0 * o.r * o.r;
  }
  fail_runtime("unreachable shape kind");
}

// ---- rendering ----

std::vector<std::uint8_t> render_scene_bytes(const Scene& scene,
                                             index_t resolution) {
  bool supported = resolution == 8 || resolution == 16 || resolution == 32 ||
                   resolution == 64 || resolution == 128 || resolution == 256;
  require(supported, "unsupported render resolution ", resolution);
  std::vector<std::uint8_t> rgb((std::size_t)(3 * resolution * resolution),
                                128);
  for (index_t py = 0; py < resolution; ++py) {
    double y = ((double)py + 0.5) / (double)resolution;
    for (index_t px = 0; px < resolution; ++px) {
      double x = ((double)px + 0.5) / (double)resolution;
      // Later objects draw on top.
      for (auto it = scene.objects.rbegin(); it != scene.objects.rend();
           ++it) {
        if (point_in_object(*it, x, y)) {
          std::size_t at = 3 * (std::size_t)(py * resolution + px);
          const std::uint8_t* pal = kPalette[(int)it->color];
          rgb[at] = pal[0];
          rgb[at + 1] = pal[1];
          rgb[at + 2] = pal[2];
          break;
        }
      }
    }
  }
  return rgb;
}

std::uint8_t real_to_byte(double v) {
  double b = std::nearbyint(v * 128.0 + 128.0);
  if (b < 0) b = 0;
  if (b > 255) b = 255;
  return (std::uint8_t)b;
}

// ---- captions ----

namespace {

// Template grammar: C/S expand to object i's color and shape words, REL to
// the truthful spatial relation between objects 0 and 1.
std::vector<index_t> caption_from_template(const Scene& scene, int tmpl) {
  auto C = [&](int i) {
    return color_word_id(scene.objects[(std::size_t)i].color);
  };
  auto S = [&](int i) {
    return shape_word_id(scene.objects[(std::size_t)i].shape);
  };
  index_t a = vocab_id("a");
  int n = (int)scene.objects.size();
  if (n == 1) {
    switch (tmpl) {
      case 0:
        return {a, C(0), S(0)};
      case 1:
        return {vocab_id("there"), vocab_id("is"), a, C(0), S(0)};
      case 2:
        return {vocab_id("this"), vocab_id("picture"), vocab_id("shows"), a,
                C(0), S(0)};
      default:
        return {a, C(0), S(0), vocab_id("in"), vocab_id("this"),
                vocab_id("scene")};
    }
  }
  if (n == 2) {
    index_t rel;
    double dy = scene.objects[0].cy - scene.objects[1].cy;
    if (dy < -0.05)
      rel = vocab_id("above");
    else if (dy > 0.05)
      rel = vocab_id("below");
    else
      rel = vocab_id("near");
    switch (tmpl) {
      case 0:
        return {a, C(0), S(0), vocab_id("and"), a, C(1), S(1)};
      case 1:
        return {vocab_id("there"), vocab_id("are"), a, C(0), S(0),
                vocab_id("and"), a, C(1), S(1)};
      case 2:
        return {vocab_id("this"), vocab_id("scene"), vocab_id("contains"), a,
                C(0), S(0), vocab_id("and"), a, C(1), S(1)};
      default:
        return {a, C(0), S(0), rel, a, C(1), S(1)};
    }
  }
  switch (tmpl) {
    case 0:
      return {a, C(0), S(0), a, C(1), S(1), vocab_id("and"), a, C(2), S(2)};
    case 1:
      return {vocab_id("there"), vocab_id("are"), a, C(0), S(0), a, C(1),
              S(1), vocab_id("and"), a, C(2), S(2)};
    default:
      return {vocab_id("it"), vocab_id("shows"), a, C(0), S(0), a, C(1), S(1),
              a, C(2), S(2)};
  }
}

int template_count(int objects) { return objects == 3 ? 3 : 4; }

}  // namespace

std::vector<index_t> generate_caption(const Scene& scene, std::uint64_t seed) {
  require(!scene.objects.empty() && scene.objects.size() <= 3,
          "caption for invalid scene with ", scene.objects.size(), " objects");
  Rng rng = Rng::stream(seed, "caption");
  int tmpl = (int)rng.uniform_int(template_count((int)scene.objects.size()));
  auto tokens = caption_from_template(scene, tmpl);
  require(tokens.size() >= 3 && tokens.size() <= 12,
          "caption template produced ", tokens.size(), " tokens");
  return tokens;
}

// ---- detections ----

std::vector<Detection> gt_detect(const Scene& scene, index_t resolution,
                                 index_t top_r) {
  require(top_r >= 1, "top_r must be at least 1, got ", top_r);
  std::vector<Detection> dets;
  for (const auto& o : scene.objects) {
    BoxN b = object_box(o);
    Detection d;
    d.x0 = std::floor(b.x0 * (double)resolution);
    d.y0 = std::floor(b.y0 * (double)resolution);
    d.x1 = std::ceil(b.x1 * (double)resolution);
    d.y1 = std::ceil(b.y1 * (double)resolution);
    d.x0 = std::max(0.0, d.x0);
    d.y0 = std::max(0.0, d.y0);
    d.x1 = std::min((double)resolution, d.x1);
    d.y1 = std::min((double)resolution, d.y1);
    d.label = label_of(o.color, o.shape);
    d.conf = object_area(o);  // canvas has unit area
    dets.push_back(d);
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.conf > b.conf;
                   });
  if ((index_t)dets.size() > top_r) dets.resize((std::size_t)top_r);
  return dets;
}

BoxN detection_box_normalized(const Detection& det, index_t resolution) {
  double r = (double)resolution;
  return {det.x0 / r, det.y0 / r, det.x1 / r, det.y1 / r};
}

// ---- salience ----

std::vector<double> salience_weights(index_t word_id, const Scene& scene,
                                     const std::vector<BoxN>& regions) {
  require(!regions.empty(), "salience_weights with no regions");
  std::size_t n = regions.size();
  std::vector<double> w(n, 1.0 / (double)n);
  if (!is_visual_word(word_id)) return w;

  std::vector<BoxN> matching;
  for (const auto& o : scene.objects) {
    bool match = word_id == color_word_id(o.color) ||
                 word_id == shape_word_id(o.shape);
    if (match) matching.push_back(object_box(o));
  }
  if (matching.empty()) return w;  // visual word absent from the scene

  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0;
    for (const auto& mb : matching) acc += iou(regions[i], mb);
    w[i] = acc;
    total += acc;
  }
  if (total <= 0)
    return std::vector<double>(n, 1.0 / (double)n);
  for (auto& v : w) v /= total;
  return w;
}

// ---- dataset ----

Dataset generate_dataset(std::uint64_t seed, index_t count, index_t resolution,
                         index_t top_r) {
  require(count >= 0, "negative dataset count");
  Dataset ds;
  ds.seed = seed;
  ds.resolution = resolution;
  ds.vocab = vocabulary();
  ds.samples.resize((std::size_t)count);
  for (index_t i = 0; i < count; ++i) {
    std::uint64_t s = seed ^ (std::uint64_t)i;
    Scene scene = sample_scene(s);
    Sample& out = ds.samples[(std::size_t)i];
    out.image = render_scene_bytes(scene, resolution);
    out.tokens = generate_caption(scene, s);
    out.detections = gt_detect(scene, resolution, top_r);
  }
  return ds;
}

void write_ppm(const std::string& path, const std::vector<std::uint8_t>& rgb,
               index_t resolution) {
  require((index_t)rgb.size() == 3 * resolution * resolution,
          "ppm payload size mismatch for ", path);
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot open ", path, " for writing");
  f << "P6\n" << resolution << " " << resolution << "\n255\n";
  f.write((const char*)rgb.data(), (std::streamsize)rgb.size());
  require(f.good(), "short write to ", path);
}

namespace {

// Pulls one whitespace-delimited token from a PPM header, tracking the byte
// offset for error messages.
std::string ppm_token(const std::string& buf, std::size_t& pos,
                      const std::string& path) {
  while (pos < buf.size() &&
         (buf[pos] == ' ' || buf[pos] == '\t' || buf[pos] == '\n' ||
          buf[pos] == '\r'))
    ++pos;
  if (pos < buf.size() && buf[pos] == '#') {
    while (pos < buf.size() && buf[pos] != '\n') ++pos;
    return ppm_token(buf, pos, path);
  }
  std::size_t start = pos;
  while (pos < buf.size() && buf[pos] != ' ' && buf[pos] != '\t' &&
         buf[pos] != '\n' && buf[pos] != '\r')
    ++pos;
  if (start == pos)
    fail_runtime("malformed ppm ", path, " at byte ", start,
                 ": expected header token");
  return buf.substr(start, pos - start);
}

}  // namespace

std::vector<std::uint8_t> read_ppm(const std::string& path,
                                   index_t* resolution_out) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open ", path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::string magic = ppm_token(buf, pos, path);
  if (magic != "P6")
    fail_runtime("malformed ppm ", path, " at byte 0: magic ", magic);
  index_t w = std::stoll(ppm_token(buf, pos, path));
  index_t h = std::stoll(ppm_token(buf, pos, path));
  index_t maxval = std::stoll(ppm_token(buf, pos, path));
  if (w <= 0 || h <= 0 || w != h)
    fail_runtime("malformed ppm ", path, " at byte ", pos,
                 ": bad dimensions ", w, "x", h);
  if (maxval != 255)
    fail_runtime("malformed ppm ", path, " at byte ", pos, ": maxval ",
                 maxval);
  // Exactly one whitespace byte separates the header from the pixels.
  if (pos >= buf.size())
    fail_runtime("malformed ppm ", path, " at byte ", pos,
                 ": truncated header");
  ++pos;
  std::size_t need = (std::size_t)(3 * w * h);
  if (buf.size() - pos != need)
    fail_runtime("malformed ppm ", path, " at byte ", pos, ": expected ", need,
                 " pixel bytes, found ", buf.size() - pos);
  if (resolution_out) *resolution_out = w;
  return std::vector<std::uint8_t>(buf.begin() + (std::ptrdiff_t)pos,
                                   buf.end());
}

namespace {

std::string image_path(const std::string& dir, index_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06lld.ppm", (long long)index);
  return dir + "/images/" + name;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir + "/images");

  std::ofstream manifest(dir + "/manifest.txt");
  require(manifest.good(), "cannot write ", dir, "/manifest.txt");
  manifest << "format_version=1\n";
  manifest << "seed=" << ds.seed << "\n";
  manifest << "count=" << ds.samples.size() << "\n";
  manifest << "resolution=" << ds.resolution << "\n";
  manifest << "captions_per_image=1\n";
  manifest << "vocab=";
  for (std::size_t i = 0; i < ds.vocab.size(); ++i) {
    if (i) manifest << " ";
    manifest << ds.vocab[i];
  }
  manifest << "\n";
  require(manifest.good(), "short write to ", dir, "/manifest.txt");

  std::ofstream captions(dir + "/captions.tsv");
  std::ofstream detections(dir + "/detections.tsv");
  require(captions.good() && detections.good(), "cannot write tsv files in ",
          dir);
  char num[64];
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    write_ppm(image_path(dir, (index_t)i), s.image, ds.resolution);

    captions << i;
    captions << "\t";
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      if (t) captions << " ";
      captions << s.tokens[t];
    }
    captions << "\n";

    detections << i;
    for (const auto& d : s.detections) {
      std::snprintf(num, sizeof(num), "%.17g %.17g %.17g %.17g %d %.17g",
                    d.x0, d.y0, d.x1, d.y1, d.label, d.conf);
      detections << "\t" << num;
    }
    detections << "\n";
  }
  require(captions.good() && detections.good(), "short write of tsv files in ",
          dir);
}

namespace {

std::map<std::string, std::string> read_manifest(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open ", path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(f, line)) {
    if (!line.empty()) {
      auto eq = line.find('=');
      if (eq == std::string::npos)
        fail_runtime("malformed manifest ", path, " at byte ", offset,
                     ": missing '='");
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    offset += line.size() + 1;
  }
  return kv;
}

const std::string& manifest_get(
    const std::map<std::string, std::string>& kv, const std::string& key,
    const std::string& path) {
  auto it = kv.find(key);
  if (it == kv.end())
    fail_runtime("manifest ", path, " is missing key ", key);
  return it->second;
}

}  // namespace

Dataset read_dataset(const std::string& dir) {
  std::string mpath = dir + "/manifest.txt";
  auto kv = read_manifest(mpath);
  if (manifest_get(kv, "format_version", mpath) != "1")
    fail_runtime("manifest ", mpath, ": unsupported format_version ",
                 kv["format_version"]);
  Dataset ds;
  ds.seed = std::stoull(manifest_get(kv, "seed", mpath));
  ds.resolution = std::stoll(manifest_get(kv, "resolution", mpath));
  index_t count = std::stoll(manifest_get(kv, "count", mpath));
  {
    std::istringstream vs(manifest_get(kv, "vocab", mpath));
    std::string w;
    while (vs >> w) ds.vocab.push_back(w);
  }
  require(!ds.vocab.empty(), "manifest ", mpath, " has an empty vocab");
  ds.samples.resize((std::size_t)count);

  for (index_t i = 0; i < count; ++i) {
    index_t res = 0;
    ds.samples[(std::size_t)i].image = read_ppm(image_path(dir, i), &res);
    if (res != ds.resolution)
      fail_runtime(image_path(dir, i), ": resolution ", res,
                   " does not match manifest ", ds.resolution);
  }

  {
    std::string cpath = dir + "/captions.tsv";
    std::ifstream f(cpath);
    require(f.good(), "cannot open ", cpath);
    std::string line;
    std::size_t offset = 0;
    index_t row = 0;
    while (std::getline(f, line)) {
      if (row >= count)
        fail_runtime("malformed captions ", cpath, " at byte ", offset,
                     ": more rows than manifest count ", count);
      auto tab = line.find('\t');
      if (tab == std::string::npos)
        fail_runtime("malformed captions ", cpath, " at byte ", offset,
                     ": missing tab");
      index_t idx = std::stoll(line.substr(0, tab));
      if (idx != row)
        fail_runtime("malformed captions ", cpath, " at byte ", offset,
                     ": index ", idx, " out of order");
      std::istringstream ts(line.substr(tab + 1));
      index_t tok;
      auto& tokens = ds.samples[(std::size_t)row].tokens;
      while (ts >> tok) {
        if (tok < 0 || tok >= (index_t)ds.vocab.size())
          fail_runtime("malformed captions ", cpath, " at byte ", offset,
                       ": token id ", tok, " out of vocab");
        tokens.push_back(tok);
      }
      if (tokens.empty())
        fail_runtime("malformed captions ", cpath, " at byte ", offset,
                     ": empty caption");
      ++row;
      offset += line.size() + 1;
    }
    if (row != count)
      fail_runtime("captions ", cpath, ": found ", row, " rows, expected ",
                   count);
  }

  {
    std::string dpath = dir + "/detections.tsv";
    std::ifstream f(dpath);
    require(f.good(), "cannot open ", dpath);
    std::string line;
    std::size_t offset = 0;
    index_t row = 0;
    while (std::getline(f, line)) {
      if (row >= count)
        fail_runtime("malformed detections ", dpath, " at byte ", offset,
                     ": more rows than manifest count ", count);
      std::istringstream ls(line);
      std::string field;
      if (!std::getline(ls, field, '\t'))
        fail_runtime("malformed detections ", dpath, " at byte ", offset,
                     ": empty line");
      if (std::stoll(field) != row)
        fail_runtime("malformed detections ", dpath, " at byte ", offset,
                     ": index out of order");
      while (std::getline(ls, field, '\t')) {
        Detection d;
        std::istringstream bs(field);
        if (!(bs >> d.x0 >> d.y0 >> d.x1 >> d.y1 >> d.label >> d.conf))
          fail_runtime("malformed detections ", dpath, " at byte ", offset,
                       ": bad box record '", field, "'");
        ds.samples[(std::size_t)row].detections.push_back(d);
      }
      ++row;
      offset += line.size() + 1;
    }
    if (row != count)
      fail_runtime("detections ", dpath, ": found ", row, " rows, expected ",
                   count);
  }
  return ds;
}

std::uint64_t dataset_content_hash(const Dataset& ds) {
  std::string blob;
  blob += str_cat("seed=", ds.seed, ";res=", ds.resolution, ";");
  for (const auto& w : ds.vocab) blob += w + ",";
  for (const auto& s : ds.samples) {
    blob.append((const char*)s.image.data(), s.image.size());
    for (auto t : s.tokens) blob += str_cat(t, " ");
    for (const auto& d : s.detections)
      blob += str_cat(d.x0, ",", d.y0, ",", d.x1, ",", d.y1, ",", d.label, ",",
                      d.conf, ";");
  }
  return fnv1a64(blob);
}

}  // namespace data
}  // namespace cpgan

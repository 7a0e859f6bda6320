#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpgan/random.hpp"
#include "cpgan/tensor.hpp"

namespace cpgan {
namespace data {

enum class ShapeKind { kCircle = 0, kSquare = 1, kTriangle = 2 };
enum class ColorKind {
  kRed = 0,
  kGreen = 1,
  kBlue = 2,
  kYellow = 3,
  kPurple = 4,
  kCyan = 5
};

constexpr int kNumShapes = 3;
constexpr int kNumColors = 6;
constexpr int kNumLabels = kNumShapes * kNumColors;

// Geometry in normalized [0,1]^2 coordinates, y down. For squares r is the
// half-side; for triangles the circumradius of the upward-pointing
// equilateral triangle.
struct SceneObject {
  ShapeKind shape;
  ColorKind color;
  double cx, cy, r;
};

struct Scene {
  std::vector<SceneObject> objects;
};

// Axis-aligned box in normalized coordinates.
struct BoxN {
  double x0, y0, x1, y1;
};

// Detector-style record; box in pixels of the queried resolution.
struct Detection {
  double x0, y0, x1, y1;
  int label;  // color * 3 + shape
  double conf;
};

struct Sample {
  std::vector<std::uint8_t> image;  // interleaved RGB, dataset resolution
  std::vector<index_t> tokens;
  std::vector<Detection> detections;
};

struct Dataset {
  std::uint64_t seed = 0;
  index_t resolution = 0;
  std::vector<std::string> vocab;
  std::vector<Sample> samples;
};

// ---- vocabulary ----

const std::vector<std::string>& vocabulary();
index_t vocab_id(const std::string& word);
const std::string& vocab_word(index_t id);
bool is_visual_word(index_t id);
int label_of(ColorKind c, ShapeKind s);
index_t color_word_id(ColorKind c);
index_t shape_word_id(ShapeKind s);

// ---- scene pipeline ----

Scene sample_scene(std::uint64_t seed);
bool scene_valid(const Scene& scene);

// Tight normalized bounding box of one object.
BoxN object_box(const SceneObject& obj);
double object_area(const SceneObject& obj);

std::vector<std::uint8_t> render_scene_bytes(const Scene& scene,
                                             index_t resolution);
std::vector<index_t> generate_caption(const Scene& scene, std::uint64_t seed);
std::vector<Detection> gt_detect(const Scene& scene, index_t resolution,
                                 index_t top_r);
std::vector<double> salience_weights(index_t word_id, const Scene& scene,
                                     const std::vector<BoxN>& regions);

BoxN detection_box_normalized(const Detection& det, index_t resolution);

// ---- pixel mapping ----

// byte 128 maps to exactly 0; the full byte range covers [-1, 127/128].
inline double byte_to_real(std::uint8_t b) { return ((double)b - 128.0) / 128.0; }
std::uint8_t real_to_byte(double v);

template <typename T>
Tensor<T> image_from_bytes(const std::vector<std::uint8_t>& rgb,
                           index_t resolution) {
  require((index_t)rgb.size() == 3 * resolution * resolution,
          "image byte count ", rgb.size(), " for resolution ", resolution);
  auto img = Tensor<T>::zeros({3, resolution, resolution});
  for (index_t c = 0; c < 3; ++c)
    for (index_t p = 0; p < resolution * resolution; ++p)
      img.data()[c * resolution * resolution + p] =
          (T)byte_to_real(rgb[(std::size_t)(3 * p + c)]);
  return img;
}

template <typename T>
std::vector<std::uint8_t> bytes_from_image(const Tensor<T>& img) {
  require(img.rank() == 3 && img.extent(0) == 3 &&
              img.extent(1) == img.extent(2),
          "expected (3,H,H) image, got ", shape_str(img.shape()));
  index_t res = img.extent(1);
  std::vector<std::uint8_t> rgb((std::size_t)(3 * res * res));
  for (index_t c = 0; c < 3; ++c)
    for (index_t p = 0; p < res * res; ++p)
      rgb[(std::size_t)(3 * p + c)] =
          real_to_byte((double)img.data()[c * res * res + p]);
  return rgb;
}

// ---- dataset generation and serialization ----

Dataset generate_dataset(std::uint64_t seed, index_t count, index_t resolution,
                         index_t top_r);
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

void write_ppm(const std::string& path, const std::vector<std::uint8_t>& rgb,
               index_t resolution);
std::vector<std::uint8_t> read_ppm(const std::string& path,
                                   index_t* resolution_out);

std::uint64_t dataset_content_hash(const Dataset& ds);

}  // namespace data
}  // namespace cpgan

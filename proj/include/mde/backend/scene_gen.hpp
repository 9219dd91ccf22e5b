#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mde/core/tensor.hpp"
#include "mde/core/vocab.hpp"

namespace mde {

enum class ShapeKind { circle, square, triangle };
enum class ShapeColor { red, green, blue, yellow };

const char* shape_word(ShapeKind k);
const char* color_word(ShapeColor c);
bool parse_shape_word(const std::string& word, ShapeKind* out);
bool parse_color_word(const std::string& word, ShapeColor* out);
// Reference palette, [r,g,b] in [0,1].
std::array<double, 3> color_rgb(ShapeColor c);

struct SceneShape {
    ShapeKind kind = ShapeKind::circle;
    ShapeColor color = ShapeColor::red;
    double cx = 0, cy = 0, radius = 0;
};

struct SyntheticScene {
    std::vector<SceneShape> shapes;  // left-to-right order
    std::string caption;             // mentions every shape once, in order
    std::vector<Tensor> masks;       // visible pixels per shape, [H,W] binary
    bool overlap = false;
    Tensor image;                    // [3,H,W] in [0,1]
    std::uint64_t bg_seed = 0;       // reproduces the background exactly
};

// Deterministic given the seed; round(n * overlap_fraction) scenes contain
// an overlapping shape pair.
std::vector<SyntheticScene> generate_dataset(int n, std::uint64_t seed, double overlap_fraction,
                                             int image_size = 32);

// Renders shapes over the scene's background with no other content; used by
// classifier sanity checks and as an editing oracle.
Tensor render_scene_image(const std::vector<SceneShape>& shapes, std::uint64_t bg_seed,
                          int image_size);

// Dataset directory layout: scene_%05d.png, scene_%05d.masks/mask_%02d.png,
// scene_%05d.json.
void save_dataset(const std::string& dir, const std::vector<SyntheticScene>& scenes);
std::vector<SyntheticScene> load_dataset(const std::string& dir);

}  // namespace mde

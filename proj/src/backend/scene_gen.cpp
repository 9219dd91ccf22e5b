#include "mde/backend/scene_gen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mde/core/errors.hpp"
#include "mde/core/rng.hpp"
#include "mde/io/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mde {

const char* shape_word(ShapeKind k) {
    switch (k) {
        case ShapeKind::circle: return "circle";
        case ShapeKind::square: return "square";
        case ShapeKind::triangle: return "triangle";
    }
    return "?";
}

const char* color_word(ShapeColor c) {
    switch (c) {
        case ShapeColor::red: return "red";
        case ShapeColor::green: return "green";
        case ShapeColor::blue: return "blue";
        case ShapeColor::yellow: return "yellow";
    }
    return "?";
}

bool parse_shape_word(const std::string& word, ShapeKind* out) {
    for (ShapeKind k : {ShapeKind::circle, ShapeKind::square, ShapeKind::triangle}) {
        if (word == shape_word(k)) {
            if (out)
                *out = k;
            return true;
        }
    }
    return false;
}

bool parse_color_word(const std::string& word, ShapeColor* out) {
    for (ShapeColor c :
         {ShapeColor::red, ShapeColor::green, ShapeColor::blue, ShapeColor::yellow}) {
        if (word == color_word(c)) {
            if (out)
                *out = c;
            return true;
        }
    }
    return false;
}

std::array<double, 3> color_rgb(ShapeColor c) {
    switch (c) {
        case ShapeColor::red: return {0.90, 0.12, 0.10};
        case ShapeColor::green: return {0.10, 0.78, 0.16};
        case ShapeColor::blue: return {0.14, 0.22, 0.90};
        case ShapeColor::yellow: return {0.95, 0.86, 0.10};
    }
    return {0, 0, 0};
}

namespace {

bool inside_shape(const SceneShape& s, double x, double y) {
    const double dx = x - s.cx, dy = y - s.cy;
    switch (s.kind) {
        case ShapeKind::circle:
            return dx * dx + dy * dy <= s.radius * s.radius;
        case ShapeKind::square: {
            const double half = 0.85 * s.radius;
            return std::fabs(dx) <= half && std::fabs(dy) <= half;
        }
        case ShapeKind::triangle: {
            // Equilateral, apex up (y grows downward), inscribed in radius.
            const double r = s.radius * 1.1;
            const double ax = s.cx, ay = s.cy - r;
            const double bx = s.cx - r * 0.8660254, by = s.cy + r * 0.5;
            const double cx2 = s.cx + r * 0.8660254, cy2 = s.cy + r * 0.5;
            auto side = [x, y](double x1, double y1, double x2, double y2) {
                return (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
            };
            const double d1 = side(ax, ay, bx, by);
            const double d2 = side(bx, by, cx2, cy2);
            const double d3 = side(cx2, cy2, ax, ay);
            const bool any_neg = d1 < 0 || d2 < 0 || d3 < 0;
            const bool any_pos = d1 > 0 || d2 > 0 || d3 > 0;
            return !(any_neg && any_pos);
        }
    }
    return false;
}

// 3x3 supersampled coverage in [0,1].
Tensor coverage_map(const SceneShape& s, int size) {
    Tensor cov({size, size});
    const int lo_y = std::max(0, static_cast<int>(s.cy - s.radius * 1.3 - 1));
    const int hi_y = std::min(size - 1, static_cast<int>(s.cy + s.radius * 1.3 + 1));
    const int lo_x = std::max(0, static_cast<int>(s.cx - s.radius * 1.3 - 1));
    const int hi_x = std::min(size - 1, static_cast<int>(s.cx + s.radius * 1.3 + 1));
    for (int y = lo_y; y <= hi_y; ++y) {
        for (int x = lo_x; x <= hi_x; ++x) {
            int hits = 0;
            for (int sy = 0; sy < 3; ++sy)
                for (int sx = 0; sx < 3; ++sx)
                    if (inside_shape(s, x + (sx + 0.5) / 3.0, y + (sy + 0.5) / 3.0))
                        ++hits;
            cov.at(y, x) = hits / 9.0;
        }
    }
    return cov;
}

Tensor render_background(std::uint64_t bg_seed, int size) {
    Rng rng(bg_seed);
    const double base = rng.uniform(0.10, 0.22);
    const double amp = rng.uniform(0.0, 0.06);
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const double ct = std::cos(theta), st = std::sin(theta);
    Tensor img({3, size, size});
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double proj =
                ((x + 0.5 - size / 2.0) * ct + (y + 0.5 - size / 2.0) * st) / size;
            const double v = base + amp * proj;
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = v;
        }
    }
    return img;
}

void composite(Tensor& img, const SceneShape& s, const Tensor& cov, int size) {
    const auto rgb = color_rgb(s.color);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double a = cov.at(y, x);
            if (a <= 0.0)
                continue;
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = img.at(c, y, x) * (1.0 - a) + rgb[static_cast<std::size_t>(c)] * a;
        }
    }
}

double mask_area(const Tensor& m) {
    double a = 0;
    for (double v : m.vec())
        a += v;
    return a;
}

// Visible (top-most) binary masks per shape, drawn in order.
std::vector<Tensor> visibility_masks(const std::vector<Tensor>& covs, int size) {
    std::vector<Tensor> masks;
    for (std::size_t i = 0; i < covs.size(); ++i) {
        Tensor m({size, size});
        for (int p = 0; p < size * size; ++p) {
            bool vis = covs[i][static_cast<std::size_t>(p)] > 0.5;
            for (std::size_t j = i + 1; vis && j < covs.size(); ++j)
                if (covs[j][static_cast<std::size_t>(p)] > 0.5)
                    vis = false;
            m[static_cast<std::size_t>(p)] = vis ? 1.0 : 0.0;
        }
        masks.push_back(std::move(m));
    }
    return masks;
}

ShapeKind random_kind(Rng& rng) { return static_cast<ShapeKind>(rng.uniform_int(0, 2)); }
ShapeColor random_color(Rng& rng) { return static_cast<ShapeColor>(rng.uniform_int(0, 3)); }

std::string build_caption(const std::vector<SceneShape>& shapes) {
    std::string cap;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (i)
            cap += " and ";
        cap += "a ";
        cap += color_word(shapes[i].color);
        cap += " ";
        cap += shape_word(shapes[i].kind);
    }
    return cap;
}

SyntheticScene make_scene(Rng& rng, std::uint64_t bg_seed, bool want_overlap, bool single,
                          int size) {
    SyntheticScene scene;
    scene.overlap = want_overlap;
    scene.bg_seed = bg_seed;

    for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<SceneShape> shapes;
        if (single) {
            SceneShape s;
            s.kind = random_kind(rng);
            s.color = random_color(rng);
            s.radius = rng.uniform(5.5, 7.5);
            s.cx = rng.uniform(12.0, 20.0);
            s.cy = rng.uniform(12.0, 20.0);
            shapes = {s};
        } else {
            SceneShape a, b;
            a.kind = random_kind(rng);
            a.color = random_color(rng);
            do {
                b.kind = random_kind(rng);
                b.color = random_color(rng);
            } while (b.kind == a.kind && b.color == a.color);
            a.radius = rng.uniform(4.5, 6.5);
            b.radius = rng.uniform(4.5, 6.5);
            if (want_overlap) {
                a.cx = rng.uniform(9.0, 12.0);
                a.cy = rng.uniform(a.radius + 2.0, size - a.radius - 2.0);
                const double d = (a.radius + b.radius) * rng.uniform(0.55, 0.8);
                b.cx = a.cx + d;
                b.cy = std::clamp(a.cy + rng.uniform(-2.0, 2.0), b.radius + 2.0,
                                  size - b.radius - 2.0);
            } else {
                a.cx = rng.uniform(a.radius + 1.0, 11.0);
                a.cy = rng.uniform(a.radius + 1.5, size - a.radius - 1.5);
                b.cx = rng.uniform(21.0, size - b.radius - 1.0);
                b.cy = rng.uniform(b.radius + 1.5, size - b.radius - 1.5);
            }
            if (b.cx + b.radius > size - 0.5 || a.cx - a.radius < 0.5)
                continue;
            shapes = {a, b};
        }

        std::vector<Tensor> covs;
        covs.reserve(shapes.size());
        for (const auto& s : shapes)
            covs.push_back(coverage_map(s, size));
        auto masks = visibility_masks(covs, size);

        bool ok = true;
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            double raw = 0;
            for (double v : covs[i].vec())
                raw += v > 0.5 ? 1.0 : 0.0;
            if (mask_area(masks[i]) < 12.0 || raw < 12.0)
                ok = false;
        }
        if (!single && ok) {
            // Overlap state must match the request: any pixel where both
            // raw coverages exceed 0.5.
            bool touching = false;
            for (int p = 0; p < size * size; ++p)
                if (covs[0][static_cast<std::size_t>(p)] > 0.5 &&
                    covs[1][static_cast<std::size_t>(p)] > 0.5)
                    touching = true;
            if (touching != want_overlap)
                ok = false;
            if (want_overlap) {
                // The occluded shape must stay mostly visible.
                double raw = 0;
                for (double v : covs[0].vec())
                    raw += v > 0.5 ? 1.0 : 0.0;
                if (mask_area(masks[0]) < 0.5 * raw)
                    ok = false;
            }
        }
        if (!ok)
            continue;

        scene.shapes = shapes;
        scene.masks = std::move(masks);
        scene.caption = build_caption(shapes);
        scene.image = render_background(bg_seed, size);
        for (std::size_t i = 0; i < shapes.size(); ++i)
            composite(scene.image, shapes[i], covs[i], size);
        return scene;
    }
    throw Error("scene placement failed after 200 attempts");
}

}  // namespace

Tensor render_scene_image(const std::vector<SceneShape>& shapes, std::uint64_t bg_seed,
                          int image_size) {
    Tensor img = render_background(bg_seed, image_size);
    for (const auto& s : shapes)
        composite(img, s, coverage_map(s, image_size), image_size);
    return img;
}

std::vector<SyntheticScene> generate_dataset(int n, std::uint64_t seed, double overlap_fraction,
                                             int image_size) {
    if (n < 1)
        throw Error("dataset size must be >= 1");
    if (overlap_fraction < 0.0 || overlap_fraction > 1.0)
        throw Error("overlap fraction must lie in [0,1]");

    const int n_overlap = static_cast<int>(std::lround(n * overlap_fraction));
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng(derive_seed(seed, "overlap-assign"));
    for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, i))]);
    std::vector<bool> overlap_flag(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n_overlap; ++i)
        overlap_flag[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

    std::vector<SyntheticScene> scenes;
    scenes.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "scene:" + std::to_string(i)));
        const std::uint64_t bg_seed = derive_seed(seed, "bg:" + std::to_string(i));
        const bool overlap = overlap_flag[static_cast<std::size_t>(i)];
        const bool single = !overlap && rng.bernoulli(0.3);
        scenes.push_back(make_scene(rng, bg_seed, overlap, single, image_size));
    }
    return scenes;
}

void save_dataset(const std::string& dir, const std::vector<SyntheticScene>& scenes) {
    fs::create_directories(dir);
    char buf[64];
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& s = scenes[i];
        std::snprintf(buf, sizeof(buf), "scene_%05zu", i);
        const std::string stem = fs::path(dir) / buf;
        write_png_rgb01(stem + ".png", s.image);
        fs::create_directories(stem + ".masks");
        for (std::size_t m = 0; m < s.masks.size(); ++m) {
            std::snprintf(buf, sizeof(buf), "mask_%02zu.png", m);
            write_mask_png((fs::path(stem + ".masks") / buf).string(), s.masks[m]);
        }
        json meta;
        meta["caption"] = s.caption;
        meta["overlap"] = s.overlap;
        meta["bg_seed"] = s.bg_seed;
        json shapes = json::array();
        for (const auto& sh : s.shapes) {
            shapes.push_back({{"kind", shape_word(sh.kind)},
                              {"color", color_word(sh.color)},
                              {"center", {sh.cx, sh.cy}},
                              {"radius", sh.radius}});
        }
        meta["shapes"] = shapes;
        std::ofstream out(stem + ".json");
        out << meta.dump(2) << "\n";
    }
}

std::vector<SyntheticScene> load_dataset(const std::string& dir) {
    std::vector<SyntheticScene> scenes;
    char buf[64];
    for (std::size_t i = 0;; ++i) {
        std::snprintf(buf, sizeof(buf), "scene_%05zu", i);
        const std::string stem = fs::path(dir) / buf;
        if (!fs::exists(stem + ".json"))
            break;
        SyntheticScene s;
        s.image = read_png_rgb01(stem + ".png");
        std::ifstream in(stem + ".json");
        json meta = json::parse(in);
        s.caption = meta.at("caption").get<std::string>();
        s.overlap = meta.at("overlap").get<bool>();
        s.bg_seed = meta.value("bg_seed", 0ULL);
        for (const auto& js : meta.at("shapes")) {
            SceneShape sh;
            if (!parse_shape_word(js.at("kind").get<std::string>(), &sh.kind))
                throw IoError("bad shape kind in " + stem + ".json");
            if (!parse_color_word(js.at("color").get<std::string>(), &sh.color))
                throw IoError("bad shape color in " + stem + ".json");
            sh.cx = js.at("center")[0].get<double>();
            sh.cy = js.at("center")[1].get<double>();
            sh.radius = js.at("radius").get<double>();
            s.shapes.push_back(sh);
        }
        for (std::size_t m = 0; m < s.shapes.size(); ++m) {
            std::snprintf(buf, sizeof(buf), "mask_%02zu.png", m);
            s.masks.push_back(read_mask_png((fs::path(stem + ".masks") / buf).string()));
        }
        scenes.push_back(std::move(s));
    }
    if (scenes.empty())
        throw IoError("no scenes found under " + dir);
    return scenes;
}

}  // namespace mde

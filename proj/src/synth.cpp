#include "stylebias/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stylebias/rng.hpp"

namespace stylebias {

namespace {

constexpr std::uint64_t kShapeTag = 0x5348u;    // silhouette stream, domain-independent
constexpr std::uint64_t kTextureTag = 0x5458u;  // fill stream, per-domain

constexpr double kPi = std::numbers::pi;

struct Rgb {
    float r, g, b;
};

Rgb hsv(float h, float s, float v) {
    h = h - std::floor(h);
    const float c = v * s;
    const float hp = h * 6.f;
    const float x = c * (1.f - std::fabs(std::fmod(hp, 2.f) - 1.f));
    float r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp) % 6) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const float m = v - c;
    return {r + m, g + m, b + m};
}

struct ShapeParams {
    int kind;           // procedural silhouette family
    float rot;          // radians
    float scale;        // fraction of half-side
    float cx, cy;       // center, pixels
    float aspect;       // y stretch
};

ShapeParams make_shape_params(std::uint64_t seed, int class_idx, int sample_idx, int side) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(class_idx),
                       static_cast<std::uint64_t>(sample_idx), kShapeTag);
    ShapeParams p;
    p.kind = class_idx % 10;
    p.rot = uniform(rng, -0.5f, 0.5f);
    // Silhouette size is part of the shape cue: each class draws from its own
    // narrow scale band (cycle length 7, offset from the silhouette cycle of 10
    // so classes repeat a size only with a different outline).
    const float band = 0.36f + 0.055f * (class_idx % 7);
    p.scale = (band + uniform(rng, -0.02f, 0.02f)) * (side / 2.f);
    p.cx = side / 2.f + uniform(rng, -0.08f, 0.08f) * side;
    p.cy = side / 2.f + uniform(rng, -0.08f, 0.08f) * side;
    p.aspect = uniform(rng, 0.85f, 1.15f);
    return p;
}

float polygon_radius(float theta, int k, float rot) {
    float a = std::fmod(theta - rot, static_cast<float>(2 * kPi / k));
    if (a < 0) a += static_cast<float>(2 * kPi / k);
    return std::cos(static_cast<float>(kPi / k)) /
           std::cos(a - static_cast<float>(kPi / k));
}

float star_radius(float theta, int points, float inner, float rot) {
    float s = std::fmod((theta - rot) * points / static_cast<float>(2 * kPi), 1.f);
    if (s < 0) s += 1.f;
    return inner + (1.f - inner) * 2.f * std::fabs(s - 0.5f);
}

bool inside_shape(const ShapeParams& p, float px, float py) {
    float u = (px - p.cx) / p.scale;
    float v = (py - p.cy) / (p.scale * p.aspect);
    const float cr = std::cos(p.rot), sr = std::sin(p.rot);
    const float ru = cr * u + sr * v;
    const float rv = -sr * u + cr * v;
    const float r = std::sqrt(ru * ru + rv * rv);
    const float theta = std::atan2(rv, ru);
    switch (p.kind) {
        case 0: return r <= 1.f;                                            // circle
        case 1: return r <= polygon_radius(theta, 3, 0.f);                  // triangle
        case 2: return std::fabs(ru) <= 0.82f && std::fabs(rv) <= 0.82f;    // square
        case 3: return r <= star_radius(theta, 5, 0.45f, 0.f);              // star5
        case 4: return (std::fabs(ru) <= 0.34f && std::fabs(rv) <= 1.f) ||  // cross
                       (std::fabs(rv) <= 0.34f && std::fabs(ru) <= 1.f);
        case 5: return r <= 1.f && r >= 0.5f;                               // ring
        case 6: return std::fabs(ru) + std::fabs(rv) <= 1.1f;               // diamond
        case 7: return r <= polygon_radius(theta, 5, 0.f);                  // pentagon
        case 8: return r <= star_radius(theta, 7, 0.55f, 0.f);              // star7
        default: return r <= polygon_radius(theta, 6, 0.f);                 // hexagon
    }
}

// 2x2 supersampled coverage in [0,1].
std::vector<float> coverage_mask(const ShapeParams& p, int side) {
    std::vector<float> m(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            int hits = 0;
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx)
                    hits += inside_shape(p, x + 0.25f + 0.5f * sx, y + 0.25f + 0.5f * sy);
            m[static_cast<std::size_t>(y) * side + x] = hits / 4.f;
        }
    return m;
}

struct TextureParams {
    float angle;       // stripe / hatch direction
    float freq;        // stripes per image
    int cell;          // checker cell in px
    float phase;
    float hue_jitter;
    std::uint64_t noise_seed;
    float tint_hue;    // sketch wash hue, uncorrelated with the class hue
};

TextureParams make_texture_params(Rng& rng) {
    TextureParams t;
    t.angle = uniform(rng, 0.f, static_cast<float>(kPi));
    t.freq = uniform(rng, 4.f, 9.f);
    t.cell = uniform_int(rng, 4, 8);
    t.phase = uniform(rng, 0.f, 1.f);
    t.hue_jitter = uniform(rng, -0.02f, 0.02f);
    t.noise_seed = rng();
    t.tint_hue = uniform(rng, 0.f, 1.f);
    return t;
}

float pixel_noise(std::uint64_t seed, int y, int x, float amp) {
    const std::uint64_t h = mix64(seed, (static_cast<std::uint64_t>(y) << 20) | x);
    return amp * (static_cast<float>(h >> 40) / static_cast<float>(1u << 24) - 0.5f) * 2.f;
}

// Foreground texture for one class under one family, evaluated per pixel.
Rgb fg_pixel(int family, const TextureParams& t, const Rgb& primary, const Rgb& secondary,
             int y, int x, int side) {
    switch (family % 4) {
        case 0: {  // smooth fill
            const float n = pixel_noise(t.noise_seed, y, x, 0.05f);
            return {primary.r + n, primary.g + n, primary.b + n};
        }
        case 1: {  // stripes
            const float s = (x * std::cos(t.angle) + y * std::sin(t.angle)) / side;
            const float wave = 0.5f + 0.5f * std::sin(2.f * static_cast<float>(kPi) *
                                                      (s * t.freq + t.phase));
            const float mix = wave > 0.5f ? 1.f : 0.f;
            return {primary.r * mix + secondary.r * (1 - mix),
                    primary.g * mix + secondary.g * (1 - mix),
                    primary.b * mix + secondary.b * (1 - mix)};
        }
        case 2: {  // checkerboard
            const int q = ((x / t.cell) + (y / t.cell)) & 1;
            return q ? primary : secondary;
        }
        default: {  // line art: hatched solid wash whose hue carries no class signal
            const float s = x * std::cos(t.angle) + y * std::sin(t.angle);
            const float period = std::max(3.f, side / (1.6f * t.freq));
            float ph = std::fmod(s + t.phase * period, period);
            if (ph < 0) ph += period;
            const float v = (ph < 1.6f ? 0.42f : 0.75f) + pixel_noise(t.noise_seed, y, x, 0.03f);
            return hsv(t.tint_hue, 0.45f, v);
        }
    }
}

Rgb bg_pixel(int family, const TextureParams& t, int y, int x, int side) {
    switch (family % 4) {
        case 0: {
            const float g = 0.84f + pixel_noise(t.noise_seed ^ 0xB6u, y, x, 0.04f);
            return {g, g, g};
        }
        case 1: {
            const float s = (x * std::cos(t.angle + 1.2f) + y * std::sin(t.angle + 1.2f)) / side;
            const float wave = std::sin(2.f * static_cast<float>(kPi) * (s * t.freq + t.phase));
            const float g = wave > 0 ? 0.80f : 0.68f;
            return {g, g, g};
        }
        case 2: {
            const int q = ((x / (t.cell + 2)) + (y / (t.cell + 2))) & 1;
            const float g = q ? 0.80f : 0.70f;
            return {g, g, g};
        }
        default: {
            const float g = 0.92f + pixel_noise(t.noise_seed ^ 0xE1u, y, x, 0.03f);
            return hsv(t.tint_hue, 0.10f, g);
        }
    }
}

Rgb class_primary(int class_idx, int n_classes, float hue_jitter) {
    return hsv(static_cast<float>(class_idx) / n_classes + hue_jitter, 0.78f, 0.88f);
}

Rgb class_secondary(int class_idx, int n_classes, float hue_jitter) {
    return hsv(static_cast<float>(class_idx) / n_classes + hue_jitter, 0.40f, 0.55f);
}

const char* kShapeNames[10] = {"circle", "triangle", "square",  "star",    "cross",
                               "ring",   "diamond",  "pentagon", "burst",  "hexagon"};
const char* kFamilyNames[4] = {"smooth", "stripes", "checker", "sketch"};

std::string class_name(int c) {
    std::string n = kShapeNames[c % 10];
    if (c >= 10) n += std::to_string(c / 10 + 1);
    return n;
}

std::string domain_name(int d) {
    std::string n = kFamilyNames[d % 4];
    if (d >= 4) n += std::to_string(d / 4 + 1);
    return n;
}

ImageTensor render_sample(std::uint64_t seed, int domain_idx, int class_idx, int sample_idx,
                          int n_classes, int side) {
    const ShapeParams sp = make_shape_params(seed, class_idx, sample_idx, side);
    Rng trng = make_rng(seed, static_cast<std::uint64_t>(domain_idx),
                        static_cast<std::uint64_t>(class_idx),
                        mix64(static_cast<std::uint64_t>(sample_idx), kTextureTag));
    const TextureParams tp = make_texture_params(trng);
    const int family = domain_idx % 4;
    const Rgb primary = class_primary(class_idx, n_classes, tp.hue_jitter);
    const Rgb secondary = class_secondary(class_idx, n_classes, tp.hue_jitter);

    const std::vector<float> cov = coverage_mask(sp, side);
    const bool outline = family % 4 == 3;

    ImageTensor img(3, side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * side + x;
            float m = cov[i];
            Rgb fg = fg_pixel(family, tp, primary, secondary, y, x, side);
            const Rgb bg = bg_pixel(family, tp, y, x, side);
            if (outline && m > 0.f && m < 1.f) fg = {0.1f, 0.1f, 0.1f};  // silhouette edge
            img.at(0, y, x) = std::clamp(bg.r + (fg.r - bg.r) * m, 0.f, 1.f);
            img.at(1, y, x) = std::clamp(bg.g + (fg.g - bg.g) * m, 0.f, 1.f);
            img.at(2, y, x) = std::clamp(bg.b + (fg.b - bg.b) * m, 0.f, 1.f);
        }
    return img;
}

}  // namespace

DatasetGroup synthesize_group(std::uint64_t seed, int n_domains, int n_classes, int per_class,
                              int side) {
    if (n_domains < 2 || n_classes < 2 || per_class < 1 || side < 32)
        throw ArgumentError("synthesize_group: need n_domains>=2, n_classes>=2, per_class>=1, side>=32");

    std::vector<std::string> classes;
    for (int c = 0; c < n_classes; ++c) classes.push_back(class_name(c));

    DatasetGroup group;
    group.name = "synthetic";
    for (int d = 0; d < n_domains; ++d) {
        DomainDataset dom;
        dom.name = domain_name(d);
        dom.classes = classes;
        for (int c = 0; c < n_classes; ++c)
            for (int i = 0; i < per_class; ++i)
                dom.items.push_back({render_sample(seed, d, c, i, n_classes, side), c});
        group.domains.push_back(std::move(dom));
    }
    return group;
}

DomainDataset make_texture_pool(std::uint64_t seed, int n_classes, int per_class, int side,
                                const std::vector<int>& families) {
    if (n_classes < 2 || per_class < 1 || families.empty())
        throw ArgumentError("make_texture_pool: invalid sizes");
    DomainDataset pool;
    pool.name = "textures";
    for (int c = 0; c < n_classes; ++c) pool.classes.push_back(class_name(c));
    for (int c = 0; c < n_classes; ++c)
        for (int i = 0; i < per_class; ++i) {
            const int family = families[i % families.size()];
            Rng trng = make_rng(seed, 0xF00Du, static_cast<std::uint64_t>(c),
                                mix64(static_cast<std::uint64_t>(i), kTextureTag));
            const TextureParams tp = make_texture_params(trng);
            const Rgb primary = class_primary(c, n_classes, tp.hue_jitter);
            const Rgb secondary = class_secondary(c, n_classes, tp.hue_jitter);
            ImageTensor img(3, side, side);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    const Rgb p = fg_pixel(family, tp, primary, secondary, y, x, side);
                    img.at(0, y, x) = std::clamp(p.r, 0.f, 1.f);
                    img.at(1, y, x) = std::clamp(p.g, 0.f, 1.f);
                    img.at(2, y, x) = std::clamp(p.b, 0.f, 1.f);
                }
            pool.items.push_back({std::move(img), c});
        }
    return pool;
}

std::vector<std::uint8_t> synth_shape_mask(std::uint64_t seed, int class_idx, int sample_idx,
                                           int side) {
    const ShapeParams sp = make_shape_params(seed, class_idx, sample_idx, side);
    const std::vector<float> cov = coverage_mask(sp, side);
    std::vector<std::uint8_t> mask(cov.size());
    for (std::size_t i = 0; i < cov.size(); ++i) mask[i] = cov[i] >= 0.5f;
    return mask;
}

}  // namespace stylebias

#include "htru/fontset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "htru/common.hpp"

namespace htru {

namespace {

using Pt = std::array<double, 2>;
using Stroke = std::vector<Pt>;

Glyph g(std::vector<Stroke> strokes, double advance = 1.0) {
  Glyph gl;
  gl.strokes = std::move(strokes);
  gl.advance = advance;
  return gl;
}

std::map<char, Glyph> build_glyphs() {
  std::map<char, Glyph> t;
  // Uppercase, cap box y in [0, 1].
  t['A'] = g({{{0.0, 1}, {0.5, 0}, {1.0, 1}}, {{0.22, 0.62}, {0.78, 0.62}}});
  t['B'] = g({{{0.08, 0}, {0.08, 1}},
              {{0.08, 0}, {0.62, 0}, {0.78, 0.1}, {0.78, 0.4}, {0.6, 0.5}, {0.08, 0.5}},
              {{0.6, 0.5}, {0.82, 0.62}, {0.82, 0.9}, {0.62, 1}, {0.08, 1}}});
  t['C'] = g({{{0.88, 0.14}, {0.62, 0.02}, {0.3, 0.02}, {0.08, 0.2}, {0.02, 0.5},
               {0.08, 0.8}, {0.3, 0.98}, {0.62, 0.98}, {0.88, 0.86}}});
  t['D'] = g({{{0.08, 0}, {0.08, 1}},
              {{0.08, 0}, {0.5, 0}, {0.82, 0.15}, {0.93, 0.5}, {0.82, 0.85}, {0.5, 1}, {0.08, 1}}});
  t['E'] = g({{{0.9, 0}, {0.08, 0}, {0.08, 1}, {0.9, 1}}, {{0.08, 0.5}, {0.72, 0.5}}});
  t['F'] = g({{{0.9, 0}, {0.08, 0}, {0.08, 1}}, {{0.08, 0.5}, {0.68, 0.5}}});
  t['G'] = g({{{0.88, 0.14}, {0.62, 0.02}, {0.3, 0.02}, {0.08, 0.2}, {0.02, 0.5}, {0.08, 0.8},
               {0.3, 0.98}, {0.62, 0.98}, {0.88, 0.85}, {0.88, 0.58}, {0.55, 0.58}}});
  t['H'] = g({{{0.08, 0}, {0.08, 1}}, {{0.92, 0}, {0.92, 1}}, {{0.08, 0.5}, {0.92, 0.5}}});
  t['I'] = g({{{0.5, 0}, {0.5, 1}}, {{0.22, 0}, {0.78, 0}}, {{0.22, 1}, {0.78, 1}}}, 0.6);
  t['J'] = g({{{0.35, 0}, {0.95, 0}},
              {{0.72, 0}, {0.72, 0.78}, {0.58, 0.97}, {0.32, 0.97}, {0.15, 0.84}}});
  t['K'] = g({{{0.08, 0}, {0.08, 1}}, {{0.9, 0}, {0.08, 0.55}}, {{0.35, 0.4}, {0.95, 1}}});
  t['L'] = g({{{0.08, 0}, {0.08, 1}, {0.9, 1}}});
  t['M'] = g({{{0.05, 1}, {0.05, 0}, {0.5, 0.62}, {0.95, 0}, {0.95, 1}}, }, 1.15);
  t['N'] = g({{{0.08, 1}, {0.08, 0}, {0.92, 1}, {0.92, 0}}});
  t['O'] = g({{{0.5, 0.02}, {0.17, 0.12}, {0.04, 0.5}, {0.17, 0.88}, {0.5, 0.98},
               {0.83, 0.88}, {0.96, 0.5}, {0.83, 0.12}, {0.5, 0.02}}});
  t['P'] = g({{{0.08, 1}, {0.08, 0}, {0.62, 0}, {0.82, 0.12}, {0.82, 0.42}, {0.62, 0.54}, {0.08, 0.54}}});
  t['Q'] = g({{{0.5, 0.02}, {0.17, 0.12}, {0.04, 0.5}, {0.17, 0.88}, {0.5, 0.98},
               {0.83, 0.88}, {0.96, 0.5}, {0.83, 0.12}, {0.5, 0.02}},
              {{0.6, 0.72}, {0.97, 1.08}}});
  t['R'] = g({{{0.08, 1}, {0.08, 0}, {0.62, 0}, {0.82, 0.12}, {0.82, 0.42}, {0.62, 0.54}, {0.08, 0.54}},
              {{0.45, 0.54}, {0.95, 1}}});
  t['S'] = g({{{0.87, 0.14}, {0.6, 0.02}, {0.3, 0.02}, {0.1, 0.16}, {0.1, 0.36}, {0.32, 0.5},
               {0.68, 0.58}, {0.88, 0.72}, {0.88, 0.86}, {0.64, 0.98}, {0.3, 0.98}, {0.06, 0.86}}});
  t['T'] = g({{{0.03, 0}, {0.97, 0}}, {{0.5, 0}, {0.5, 1}}});
  t['U'] = g({{{0.08, 0}, {0.08, 0.72}, {0.2, 0.93}, {0.45, 1}, {0.6, 1}, {0.82, 0.92},
               {0.92, 0.72}, {0.92, 0}}});
  t['V'] = g({{{0.03, 0}, {0.5, 1}, {0.97, 0}}});
  t['W'] = g({{{0.02, 0}, {0.27, 1}, {0.5, 0.3}, {0.73, 1}, {0.98, 0}}}, 1.3);
  t['X'] = g({{{0.05, 0}, {0.95, 1}}, {{0.95, 0}, {0.05, 1}}});
  t['Y'] = g({{{0.05, 0}, {0.5, 0.5}}, {{0.95, 0}, {0.5, 0.5}, {0.5, 1}}});
  t['Z'] = g({{{0.05, 0}, {0.95, 0}, {0.05, 1}, {0.95, 1}}});

  // Lowercase, body y in [0.35, 1].
  t['a'] = g({{{0.78, 0.45}, {0.5, 0.35}, {0.2, 0.43}, {0.08, 0.66}, {0.16, 0.9}, {0.45, 1}, {0.75, 0.9}},
              {{0.78, 0.35}, {0.78, 1}}},
             0.9);
  t['b'] = g({{{0.08, 0}, {0.08, 1}},
              {{0.08, 0.52}, {0.38, 0.35}, {0.68, 0.43}, {0.8, 0.66}, {0.7, 0.9}, {0.4, 1}, {0.08, 0.86}}},
             0.9);
  t['c'] = g({{{0.78, 0.45}, {0.52, 0.35}, {0.24, 0.42}, {0.1, 0.62}, {0.1, 0.78}, {0.24, 0.94},
               {0.52, 1}, {0.78, 0.9}}},
             0.8);
  t['d'] = g({{{0.82, 0}, {0.82, 1}},
              {{0.82, 0.5}, {0.5, 0.35}, {0.2, 0.44}, {0.08, 0.67}, {0.18, 0.9}, {0.48, 1}, {0.82, 0.87}}},
             0.9);
  t['e'] = g({{{0.1, 0.7}, {0.82, 0.7}, {0.82, 0.52}, {0.6, 0.36}, {0.3, 0.36}, {0.1, 0.52},
               {0.07, 0.74}, {0.2, 0.94}, {0.5, 1}, {0.78, 0.92}}},
             0.85);
  t['f'] = g({{{0.78, 0.1}, {0.58, 0}, {0.42, 0.07}, {0.36, 0.28}, {0.36, 1}},
              {{0.1, 0.42}, {0.66, 0.42}}},
             0.7);
  t['g'] = g({{{0.8, 0.42}, {0.48, 0.35}, {0.18, 0.44}, {0.08, 0.64}, {0.18, 0.84}, {0.48, 0.93}, {0.8, 0.84}},
              {{0.8, 0.35}, {0.8, 1.12}, {0.62, 1.32}, {0.3, 1.32}, {0.12, 1.2}}},
             0.9);
  t['h'] = g({{{0.08, 0}, {0.08, 1}},
              {{0.08, 0.56}, {0.36, 0.36}, {0.64, 0.4}, {0.78, 0.6}, {0.78, 1}}},
             0.9);
  t['i'] = g({{{0.5, 0.35}, {0.5, 1}}, {{0.5, 0.14}, {0.5, 0.18}}}, 0.45);
  t['j'] = g({{{0.6, 0.35}, {0.6, 1.12}, {0.45, 1.32}, {0.2, 1.28}}, {{0.6, 0.14}, {0.6, 0.18}}}, 0.5);
  t['k'] = g({{{0.08, 0}, {0.08, 1}}, {{0.72, 0.38}, {0.08, 0.72}}, {{0.32, 0.6}, {0.82, 1}}}, 0.85);
  t['l'] = g({{{0.5, 0}, {0.5, 0.88}, {0.64, 1}}}, 0.45);
  t['m'] = g({{{0.05, 1}, {0.05, 0.36}},
              {{0.05, 0.52}, {0.24, 0.36}, {0.42, 0.43}, {0.5, 0.6}, {0.5, 1}},
              {{0.5, 0.56}, {0.68, 0.37}, {0.86, 0.44}, {0.95, 0.62}, {0.95, 1}}},
             1.3);
  t['n'] = g({{{0.08, 1}, {0.08, 0.36}},
              {{0.08, 0.55}, {0.36, 0.36}, {0.66, 0.42}, {0.8, 0.62}, {0.8, 1}}},
             0.9);
  t['o'] = g({{{0.5, 0.35}, {0.2, 0.45}, {0.08, 0.68}, {0.2, 0.9}, {0.5, 1}, {0.8, 0.9},
               {0.92, 0.68}, {0.8, 0.45}, {0.5, 0.35}}},
             0.9);
  t['p'] = g({{{0.08, 0.35}, {0.08, 1.35}},
              {{0.08, 0.52}, {0.38, 0.35}, {0.68, 0.43}, {0.8, 0.66}, {0.7, 0.9}, {0.4, 1}, {0.08, 0.86}}},
             0.9);
  t['q'] = g({{{0.82, 0.35}, {0.82, 1.35}},
              {{0.82, 0.5}, {0.5, 0.35}, {0.2, 0.44}, {0.08, 0.67}, {0.18, 0.9}, {0.48, 1}, {0.82, 0.87}}},
             0.9);
  t['r'] = g({{{0.12, 1}, {0.12, 0.36}},
              {{0.12, 0.6}, {0.32, 0.4}, {0.56, 0.35}, {0.72, 0.42}}},
             0.7);
  t['s'] = g({{{0.74, 0.42}, {0.5, 0.35}, {0.26, 0.4}, {0.16, 0.52}, {0.3, 0.64}, {0.58, 0.7},
               {0.72, 0.82}, {0.62, 0.95}, {0.34, 1}, {0.1, 0.92}}},
             0.8);
  t['t'] = g({{{0.45, 0.1}, {0.45, 0.85}, {0.56, 1}, {0.75, 0.94}}, {{0.14, 0.4}, {0.78, 0.4}}}, 0.7);
  t['u'] = g({{{0.08, 0.36}, {0.08, 0.8}, {0.2, 0.96}, {0.45, 1}, {0.66, 0.92}, {0.78, 0.78}},
              {{0.78, 0.36}, {0.78, 1}}},
             0.9);
  t['v'] = g({{{0.05, 0.36}, {0.45, 1}, {0.85, 0.36}}}, 0.9);
  t['w'] = g({{{0.02, 0.36}, {0.25, 1}, {0.48, 0.5}, {0.71, 1}, {0.95, 0.36}}}, 1.25);
  t['x'] = g({{{0.08, 0.36}, {0.82, 1}}, {{0.82, 0.36}, {0.08, 1}}}, 0.9);
  t['y'] = g({{{0.08, 0.36}, {0.48, 1}}, {{0.86, 0.36}, {0.3, 1.33}, {0.12, 1.24}}}, 0.9);
  t['z'] = g({{{0.1, 0.36}, {0.78, 0.36}, {0.1, 1}, {0.78, 1}}}, 0.9);
  return t;
}

const std::map<char, Glyph>& glyph_table() {
  static const std::map<char, Glyph> table = build_glyphs();
  return table;
}

// Split each segment and bulge the midpoint sideways; used by font 1.
Stroke round_stroke(const Stroke& s, double bulge) {
  if (s.size() < 2) return s;
  Stroke out;
  out.push_back(s.front());
  for (size_t i = 1; i < s.size(); ++i) {
    const Pt& a = s[i - 1];
    const Pt& b = s[i];
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double len = std::sqrt(dx * dx + dy * dy);
    if (len > 1e-9) {
      const double nx = -dy / len, ny = dx / len;
      out.push_back({(a[0] + b[0]) / 2 + nx * bulge, (a[1] + b[1]) / 2 + ny * bulge});
    }
    out.push_back(b);
  }
  return out;
}

Glyph styled_glyph(char c, int font) {
  Glyph gl = glyph_table().at(c);
  if (font == 1) {
    for (auto& s : gl.strokes) s = round_stroke(s, 0.06);
  } else if (font == 2) {
    for (auto& s : gl.strokes)
      for (auto& p : s) p[0] *= 0.78;
    gl.advance *= 0.85;
  }
  return gl;
}

// Canvas geometry at height 64.
constexpr double kBaselineY = 49.0;
constexpr double kCapHeight = 32.0;  // y [0,1] maps to [17, 49]
constexpr double kCharWidth = 16.0;  // pixels per advance unit
constexpr double kCharSpacing = 2.0;
constexpr double kMargin = 5.0;

double px_of(double gx, double x0, double adv_w) { return x0 + gx * adv_w; }
double py_of(double gy) { return kBaselineY - kCapHeight + gy * kCapHeight; }

void stamp_disc(GrayImage& img, double cx, double cy, double radius) {
  const int x0 = std::max(0, (int)std::floor(cx - radius - 1.0));
  const int x1 = std::min(img.width - 1, (int)std::ceil(cx + radius + 1.0));
  const int y0 = std::max(0, (int)std::floor(cy - radius - 1.0));
  const int y1 = std::min(img.height - 1, (int)std::ceil(cy + radius + 1.0));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
      const double ink = std::clamp((radius + 0.6 - d) / 1.2, 0.0, 1.0);
      if (ink <= 0.0) continue;
      const int v = (int)std::lround(255.0 - 225.0 * ink);
      img.at(y, x) = (uint8_t)std::min<int>(img.at(y, x), v);
    }
  }
}

}  // namespace

const Glyph& glyph_for(char c) {
  auto it = glyph_table().find(c);
  if (it == glyph_table().end())
    throw Error("glyph_for: no glyph for character '" + std::string(1, c) + "'");
  return it->second;
}

int rendered_width(const std::string& word, const WriterStyle& style) {
  double content = 0.0;
  for (char c : word) content += styled_glyph(c, style.font).advance * kCharWidth + kCharSpacing;
  const double slant_margin = std::fabs(std::tan(style.slant_deg * M_PI / 180.0)) * 45.0;
  return (int)std::ceil(2 * kMargin + content + slant_margin);
}

GrayImage render_word(const std::string& word, const WriterStyle& style,
                      uint64_t sample_seed) {
  const int width = rendered_width(word, style);
  GrayImage img(64, width, 255);

  std::mt19937_64 rng(mix_seed(sample_seed, style.noise_seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double slant_k = std::tan(style.slant_deg * M_PI / 180.0);
  const double wobble_phase = unit(rng) * 2.0 * M_PI;
  const double wobble_freq = 1.0 + unit(rng);
  const double radius = style.thickness * (0.92 + 0.16 * unit(rng));

  // Left-shift so that a positive slant (top leaning right) stays inside.
  double x_cursor = kMargin + (slant_k > 0 ? slant_k * 32.0 : 0.0);

  for (char c : word) {
    const Glyph gl = styled_glyph(c, style.font);
    const double adv_w = gl.advance * kCharWidth;
    const double dy_jitter = (unit(rng) - 0.5) * 2.0 * style.jitter_amp;
    for (const auto& stroke : gl.strokes) {
      // Per-stroke waviness, consistent across the stroke.
      const double wx = (unit(rng) - 0.5) * 0.6 * style.jitter_amp;
      const double wy = (unit(rng) - 0.5) * 0.6 * style.jitter_amp;
      for (size_t i = 1; i < stroke.size(); ++i) {
        const double ax = px_of(stroke[i - 1][0], x_cursor, adv_w);
        const double ay = py_of(stroke[i - 1][1]) + dy_jitter;
        const double bx = px_of(stroke[i][0], x_cursor, adv_w);
        const double by = py_of(stroke[i][1]) + dy_jitter;
        const double seg = std::hypot(bx - ax, by - ay);
        const int steps = std::max(1, (int)std::ceil(seg / 0.7));
        for (int s = 0; s <= steps; ++s) {
          const double t = (double)s / steps;
          double px = ax + t * (bx - ax);
          double py = ay + t * (by - ay);
          const double wob =
              style.jitter_amp *
              0.5 * std::sin(2.0 * M_PI * (px / width) * wobble_freq + wobble_phase);
          px += wx + slant_k * (kBaselineY - py);
          py += wy + wob;
          stamp_disc(img, px, py, radius);
        }
      }
    }
    x_cursor += adv_w + kCharSpacing;
  }
  return img;
}

}  // namespace htru

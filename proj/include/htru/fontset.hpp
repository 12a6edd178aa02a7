#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "htru/png_io.hpp"

namespace htru {

// Vector stroke glyphs. Coordinates are normalized: x in [0,1] along the
// advance direction, y = 0 at cap height and y = 1 at the baseline.
// Lowercase bodies start at y = 0.35; descenders reach y = 1.35.
struct Glyph {
  std::vector<std::vector<std::array<double, 2>>> strokes;
  double advance = 1.0;
};

// Per-writer rendering style. Distinct writers must differ in the
// (font, slant_deg, thickness) triple for writer identity to be learnable.
struct WriterStyle {
  int font = 0;            // glyph geometry variant: 0 base, 1 round, 2 narrow
  double slant_deg = 0.0;  // shear relative to the baseline
  double thickness = 1.8;  // stroke radius in pixels at canvas height 64
  double jitter_amp = 1.0; // baseline wobble amplitude in pixels
  uint64_t noise_seed = 0; // per-writer stroke waviness seed
};

const Glyph& glyph_for(char c);

// Canvas width the renderer will produce for a word under a style.
// Depends only on (word, style), never on the sample seed.
int rendered_width(const std::string& word, const WriterStyle& style);

// Render one word on a height-64 canvas, background 255. Deterministic in
// (word, style, sample_seed).
GrayImage render_word(const std::string& word, const WriterStyle& style,
                      uint64_t sample_seed);

}  // namespace htru

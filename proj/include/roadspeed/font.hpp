#pragma once

// Bitmap font used to paint plate text in synthetic scenes. Strokes are two
// cells wide so every column of a glyph carries enough ink to survive
// column-projection segmentation.

#include <array>
#include <optional>
#include <string_view>

namespace roadspeed::font {

inline constexpr int kCols = 6;
inline constexpr int kRows = 9;

using GlyphRows = std::array<std::string_view, kRows>;

struct GlyphDef {
  char ch;
  GlyphRows rows;
};

// clang-format off
inline constexpr std::array<GlyphDef, 36> kGlyphs{{
  {'0', {".####.", "##..##", "##..##", "##..##", "##..##", "##..##", "##..##", "##..##", ".####."}},
  {'1', {"..##..", ".###..", "####..", "..##..", "..##..", "..##..", "..##..", "######", "######"}},
  {'2', {".####.", "##..##", "....##", "...##.", "..##..", ".##...", "##....", "######", "######"}},
  {'3', {"#####.", "....##", "....##", "..###.", "..###.", "....##", "....##", "#####.", "#####."}},
  {'4', {"...##.", "..###.", ".####.", "##.##.", "##.##.", "######", "######", "...##.", "...##."}},
  {'5', {"######", "##....", "##....", "#####.", "....##", "....##", "....##", "##..##", ".####."}},
  {'6', {"..###.", ".##...", "##....", "#####.", "##..##", "##..##", "##..##", "##..##", ".####."}},
  {'7', {"######", "######", "....##", "...##.", "...##.", "..##..", "..##..", "..##..", "..##.."}},
  {'8', {".####.", "##..##", "##..##", ".####.", ".####.", "##..##", "##..##", "##..##", ".####."}},
  {'9', {".####.", "##..##", "##..##", "##..##", ".#####", "....##", "....##", "...##.", ".###.."}},
  {'A', {"..##..", ".####.", "##..##", "##..##", "######", "######", "##..##", "##..##", "##..##"}},
  {'B', {"#####.", "##..##", "##..##", "#####.", "#####.", "##..##", "##..##", "##..##", "#####."}},
  {'C', {".####.", "##..##", "##....", "##....", "##....", "##....", "##....", "##..##", ".####."}},
  {'D', {"####..", "##.##.", "##..##", "##..##", "##..##", "##..##", "##..##", "##.##.", "####.."}},
  {'E', {"######", "######", "##....", "#####.", "#####.", "##....", "##....", "######", "######"}},
  {'F', {"######", "######", "##....", "#####.", "#####.", "##....", "##....", "##....", "##...."}},
  {'G', {".####.", "##..##", "##....", "##....", "##.###", "##.###", "##..##", "##..##", ".####."}},
  {'H', {"##..##", "##..##", "##..##", "######", "######", "##..##", "##..##", "##..##", "##..##"}},
  {'I', {"######", "######", "..##..", "..##..", "..##..", "..##..", "..##..", "######", "######"}},
  {'J', {"######", "######", "...##.", "...##.", "...##.", "...##.", "##.##.", "##.##.", ".###.."}},
  {'K', {"##..##", "##.##.", "####..", "###...", "###...", "####..", "##.##.", "##..##", "##..##"}},
  {'L', {"##....", "##....", "##....", "##....", "##....", "##....", "##....", "######", "######"}},
  {'M', {"##..##", "######", "######", "##..##", "##..##", "##..##", "##..##", "##..##", "##..##"}},
  {'N', {"##..##", "###.##", "###.##", "######", "##.###", "##.###", "##..##", "##..##", "##..##"}},
  {'O', {"######", "##..##", "##..##", "##..##", "##..##", "##..##", "##..##", "##..##", "######"}},
  {'P', {"#####.", "##..##", "##..##", "##..##", "#####.", "##....", "##....", "##....", "##...."}},
  {'Q', {".####.", "##..##", "##..##", "##..##", "##..##", "##.###", "##..##", ".#####", "....##"}},
  {'R', {"#####.", "##..##", "##..##", "#####.", "####..", "##.##.", "##..##", "##..##", "##..##"}},
  {'S', {".#####", "##....", "##....", ".####.", ".####.", "....##", "....##", "....##", "#####."}},
  {'T', {"######", "######", "..##..", "..##..", "..##..", "..##..", "..##..", "..##..", "..##.."}},
  {'U', {"##..##", "##..##", "##..##", "##..##", "##..##", "##..##", "##..##", "######", ".####."}},
  {'V', {"##..##", "##..##", "##..##", "##..##", "##..##", "##..##", ".####.", ".####.", "..##.."}},
  {'W', {"##..##", "##..##", "##..##", "##..##", "##..##", "######", "######", "######", "##..##"}},
  {'X', {"##..##", "##..##", ".####.", "..##..", "..##..", ".####.", "##..##", "##..##", "##..##"}},
  {'Y', {"##..##", "##..##", "##..##", ".####.", "..##..", "..##..", "..##..", "..##..", "..##.."}},
  {'Z', {"######", "######", "....##", "...##.", "..##..", ".##...", "##....", "######", "######"}},
}};
// clang-format on

inline std::optional<GlyphRows> glyph(char ch) {
  for (const auto& g : kGlyphs)
    if (g.ch == ch) return g.rows;
  return std::nullopt;
}

/// Ink lookup in glyph cell coordinates; (col, row) outside the cell is blank.
inline bool ink(const GlyphRows& g, int col, int row) {
  if (col < 0 || row < 0 || col >= kCols || row >= kRows) return false;
  return g[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] == '#';
}

}  // namespace roadspeed::font

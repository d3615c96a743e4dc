#pragma once

#include "dyad/skeleton.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace dyad::plot {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // rgb, row-major

  Image(int w, int h, Rgb fill);
  void set(int x, int y, Rgb c);
  Rgb at(int x, int y) const;
};

struct StripOptions {
  int cell_width = 160;
  int cell_height = 260;
  double frame_rate = 30.0;
  std::array<int, 10> timestamps_ms{100, 200, 300, 400, 500, 600, 700, 800, 900, 1000};
};

// One column per timestamp with the ground-truth skeleton (dark) and the
// prediction (red) overlaid in the x-z plane. truth and prediction are
// frames x K future trajectories starting one frame after the last observation.
Image render_strip(const Matrix& truth, const Matrix& prediction, const Skeleton& skeleton,
                   const StripOptions& options = {});

// Binary PPM (P6).
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace dyad::plot

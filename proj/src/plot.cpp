#include "dyad/plot.hpp"

#include "dyad/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace dyad::plot {
namespace {

// 3x5 digit glyphs, one row per 3-bit nibble, top row first.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits = {{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

void draw_text(Image& img, int x, int y, const std::string& digits, int scale, Rgb c) {
  for (char ch : digits) {
    const auto& g = kDigits[ch - '0'];
    for (int r = 0; r < 5; ++r)
      for (int col = 0; col < 3; ++col)
        if (g[r] >> (2 - col) & 1)
          for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx) img.set(x + col * scale + dx, y + r * scale + dy, c);
    x += 4 * scale;
  }
}

void draw_line(Image& img, double x0, double y0, double x1, double y1, Rgb c) {
  const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))));
  for (int i = 0; i <= steps; ++i) {
    const double s = double(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + s * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + s * (y1 - y0)));
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) img.set(x + dx, y + dy, c);
  }
}

}  // namespace

Image::Image(int w, int h, Rgb fill) : width(w), height(h), pixels(std::size_t(w) * h * 3) {
  if (w < 1 || h < 1) throw ShapeError("image dimensions must be positive");
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill.r;
    pixels[i + 1] = fill.g;
    pixels[i + 2] = fill.b;
  }
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t i = (std::size_t(y) * width + x) * 3;
  pixels[i] = c.r;
  pixels[i + 1] = c.g;
  pixels[i + 2] = c.b;
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (std::size_t(y) * width + x) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

Image render_strip(const Matrix& truth, const Matrix& prediction, const Skeleton& skeleton,
                   const StripOptions& options) {
  if (truth.cols() != skeleton.dim() || prediction.cols() != skeleton.dim())
    throw ShapeError("pose width " + std::to_string(truth.cols()) + "/" + std::to_string(prediction.cols()) +
                     " does not match the " + std::to_string(skeleton.joint_count()) + "-joint skeleton");
  if (truth.rows() != prediction.rows()) throw ShapeError("truth and prediction differ in frame count");
  if (!truth.allFinite() || !prediction.allFinite()) throw NumericalError("cannot plot non-finite poses");

  std::vector<int> frames;
  for (int ms : options.timestamps_ms) {
    const int f = static_cast<int>(std::lround(ms * options.frame_rate / 1000.0));
    if (f < 1 || f > truth.rows())
      throw ShapeError("timestamp " + std::to_string(ms) + " ms needs frame " + std::to_string(f) + ", only " +
                       std::to_string(truth.rows()) + " available");
    frames.push_back(f - 1);
  }

  const int hip = skeleton.landmarks().hip_center;
  double half_w = 1e-9, lo = 1e300, hi = -1e300;
  for (int f : frames)
    for (const Matrix* m : {&truth, &prediction})
      for (int j = 0; j < skeleton.joint_count(); ++j) {
        half_w = std::max(half_w, std::abs((*m)(f, 3 * j) - truth(f, 3 * hip)));
        lo = std::min(lo, (*m)(f, 3 * j + 2));
        hi = std::max(hi, (*m)(f, 3 * j + 2));
      }
  const int header = 24, margin = 10;
  const double scale = std::min((options.cell_width - 2.0 * margin) / (2 * half_w),
                                (options.cell_height - header - 2.0 * margin) / std::max(hi - lo, 1e-9));

  const Rgb bg{255, 255, 255}, gt{40, 40, 40}, pred{215, 40, 40}, grid{200, 200, 200};
  Image img(options.cell_width * static_cast<int>(frames.size()), options.cell_height, bg);
  for (std::size_t c = 0; c < frames.size(); ++c) {
    const int x0 = static_cast<int>(c) * options.cell_width;
    for (int y = 0; y < img.height; ++y) img.set(x0, y, grid);
    const std::string label = std::to_string(options.timestamps_ms[c]);
    draw_text(img, x0 + (options.cell_width - 8 * int(label.size())) / 2, 4, label, 2, gt);
    const int f = frames[c];
    const double cx = x0 + options.cell_width / 2.0;
    auto px = [&](const Matrix& m, int j) { return cx + scale * (m(f, 3 * j) - truth(f, 3 * hip)); };
    auto py = [&](const Matrix& m, int j) { return options.cell_height - margin - scale * (m(f, 3 * j + 2) - lo); };
    for (const auto& [m, color] : {std::pair{&truth, gt}, std::pair{&prediction, pred}})
      for (const Limb& l : skeleton.limbs())
        draw_line(img, px(*m, l.parent), py(*m, l.parent), px(*m, l.child), py(*m, l.child), color);
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.pixels.data()), std::streamsize(image.pixels.size()));
}

}  // namespace dyad::plot

#include "dyad/trajectory_codec.hpp"

#include "dyad/error.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace dyad::codec {
namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + ": non-finite input");
}

}  // namespace

const Matrix& dct_basis(int n) {
  if (n < 1) throw ShapeError("DCT length must be positive");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<Matrix>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    auto basis = std::make_unique<Matrix>(n, n);
    for (int k = 0; k < n; ++k) {
      const double alpha = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (int t = 0; t < n; ++t)
        (*basis)(k, t) = alpha * std::cos(std::numbers::pi * (2 * t + 1) * k / (2.0 * n));
    }
    slot = std::move(basis);
  }
  return *slot;
}

Matrix dct_forward(const Matrix& seq) {
  if (seq.cols() < 1) throw ShapeError("dct_forward: need at least one frame");
  require_finite(seq, "dct_forward");
  return seq * dct_basis(static_cast<int>(seq.cols())).transpose();
}

Matrix dct_inverse(const Matrix& coeffs) {
  if (coeffs.cols() < 1) throw ShapeError("dct_inverse: need at least one coefficient");
  require_finite(coeffs, "dct_inverse");
  return coeffs * dct_basis(static_cast<int>(coeffs.cols()));
}

Matrix pad_replicate(const Matrix& last_window, int future) {
  if (last_window.rows() < 1) throw ShapeError("pad_replicate: empty window");
  if (future < 0) throw ShapeError("pad_replicate: negative horizon");
  Matrix out(last_window.rows() + future, last_window.cols());
  out.topRows(last_window.rows()) = last_window;
  out.bottomRows(future).rowwise() = last_window.row(last_window.rows() - 1);
  return out;
}

Matrix make_value(const Matrix& sub_sequence, int expected_length) {
  if (sub_sequence.rows() != expected_length)
    throw ShapeError("make_value: sub-sequence has " + std::to_string(sub_sequence.rows()) +
                     " frames, expected " + std::to_string(expected_length));
  return dct_forward(sub_sequence.transpose());
}

}  // namespace dyad::codec

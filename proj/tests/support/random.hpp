#pragma once

// Random generators shared by the property-style tests.

#include <random>

#include "wcgen/geometry.hpp"
#include "wcgen/image.hpp"

namespace wcgen::test {

inline Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return {d(rng), d(rng), d(rng)};
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Intrinsics random_intrinsics(std::mt19937_64& rng, int min_size = 32, int max_size = 1024) {
  std::uniform_int_distribution<int> size(min_size, max_size);
  std::uniform_real_distribution<double> f(0.3, 2.0), c(0.3, 0.7);
  const int w = size(rng);
  const int h = size(rng);
  return Intrinsics{f(rng) * w, f(rng) * h, c(rng) * w, c(rng) * h, w, h};
}

inline ImageBuffer random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> level(0, 255);
  ImageBuffer img(w, h);
  for (auto& px : img.values())
    for (auto& c : px) c = level(rng) / 255.0f;
  return img;
}

/// Low-frequency image: smooth enough that bilinear resampling is nearly exact.
inline ImageBuffer smooth_image(int w, int h, double phase = 0.0) {
  ImageBuffer img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double a = 2.0 * 3.14159265358979 * x / w;
      const double b = 2.0 * 3.14159265358979 * y / h;
      img(x, y) = {static_cast<float>(0.5 + 0.3 * std::sin(a + phase) * std::cos(b)),
                   static_cast<float>(0.5 + 0.25 * std::cos(2 * a - b + phase)),
                   static_cast<float>(0.4 + 0.2 * std::sin(a + 2 * b))};
    }
  return img;
}

}  // namespace wcgen::test

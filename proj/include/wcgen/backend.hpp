#pragma once

// Generation, depth and caption contracts, and the deterministic mocks.
//
// Mocks snap every input to what the wire protocol can carry (8-bit images
// and masks, depth on the 1/depth_scale grid) before computing, and return
// 8-bit images. An in-process mock and the same mock behind the HTTP server
// therefore produce identical bytes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wcgen/codec.hpp"
#include "wcgen/error.hpp"
#include "wcgen/hash.hpp"
#include "wcgen/image.hpp"

namespace wcgen {

enum class GenerationMode { depth_to_image, image_to_image, outpaint };

inline std::string_view to_string(GenerationMode m) {
  switch (m) {
    case GenerationMode::depth_to_image: return "depth_to_image";
    case GenerationMode::image_to_image: return "image_to_image";
    case GenerationMode::outpaint: return "outpaint";
  }
  return "unknown";
}

inline GenerationMode mode_from_string(std::string_view s) {
  if (s == "depth_to_image") return GenerationMode::depth_to_image;
  if (s == "image_to_image") return GenerationMode::image_to_image;
  if (s == "outpaint") return GenerationMode::outpaint;
  fail(ErrorCode::invalid_argument, "unknown generation mode '" + std::string(s) + "'");
}

struct GenerationRequest {
  GenerationMode mode = GenerationMode::depth_to_image;
  std::string prompt;
  std::optional<DepthMap> depth;
  std::optional<ImageBuffer> init_image;
  /// 1 = keep init_image, 0 = generate.
  std::optional<WeightMask> mask;
  double strength = 1.0;
  std::uint64_t seed = 0;
  /// Units per meter used when the depth map travels as a 16-bit PNG.
  double depth_scale = kDefaultDepthScale;

  int width() const { return init_image ? init_image->width() : depth ? depth->width() : 0; }
  int height() const { return init_image ? init_image->height() : depth ? depth->height() : 0; }

  void validate() const {
    require(std::isfinite(strength) && strength >= 0.0 && strength <= 1.0,
            ErrorCode::invalid_argument, "strength must lie in [0, 1]");
    require(depth_scale > 0.0, ErrorCode::invalid_argument, "depth_scale must be positive");
    switch (mode) {
      case GenerationMode::depth_to_image:
        require(depth.has_value(), ErrorCode::invalid_argument, "depth_to_image needs a depth map");
        require(!prompt.empty(), ErrorCode::invalid_argument, "depth_to_image needs a prompt");
        break;
      case GenerationMode::image_to_image:
        require(init_image.has_value(), ErrorCode::invalid_argument, "image_to_image needs an init image");
        break;
      case GenerationMode::outpaint:
        require(init_image.has_value() && mask.has_value(), ErrorCode::invalid_argument,
                "outpaint needs an init image and a mask");
        break;
    }
    require(width() > 0 && height() > 0, ErrorCode::invalid_argument, "conditioning is empty");
    if (init_image && depth)
      require(init_image->width() == depth->width() && init_image->height() == depth->height(),
              ErrorCode::invalid_argument, "depth and init image sizes differ");
    if (mask) {
      require(mask->width() == width() && mask->height() == height(), ErrorCode::invalid_argument,
              "mask size differs from the conditioning");
      for (float w : mask->values())
        require(std::isfinite(w) && w >= 0.0f && w <= 1.0f, ErrorCode::invalid_argument,
                "mask weights must lie in [0, 1]");
    }
  }

  /// The request as the wire would deliver it.
  GenerationRequest quantized_copy() const {
    GenerationRequest q = *this;
    if (q.init_image) q.init_image = quantized(*q.init_image);
    if (q.mask) q.mask = quantized(*q.mask);
    if (q.depth) q.depth = quantized(*q.depth, depth_scale);
    return q;
  }
};

struct GenerationResponse {
  ImageBuffer image;
  std::string backend_id;
  std::uint64_t seed_used = 0;
};

struct BackendDescriptor {
  std::string name;
  std::set<GenerationMode> capabilities;
  bool deterministic = false;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual BackendDescriptor descriptor() const = 0;
  virtual GenerationResponse generate(const GenerationRequest& req) const = 0;
};

class DepthEstimator {
 public:
  virtual ~DepthEstimator() = default;
  virtual std::string name() const = 0;
  virtual DepthMap estimate_depth(const ImageBuffer& img) const = 0;
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string name() const = 0;
  virtual std::string caption(const ImageBuffer& img) const = 0;
};

/// One of each capability, as used by a pipeline run.
struct BackendSet {
  std::shared_ptr<const GenerationBackend> generator;
  std::shared_ptr<const DepthEstimator> depth;
  std::shared_ptr<const Captioner> captioner;
};

/// Post-conditions every backend response must meet.
inline void check_generation_response(const GenerationRequest& req, const GenerationResponse& resp,
                                      ErrorCode code = ErrorCode::malformed_response) {
  require(resp.image.width() == req.width() && resp.image.height() == req.height(), code,
          "generated image is " + std::to_string(resp.image.width()) + "x" +
              std::to_string(resp.image.height()) + ", expected " + std::to_string(req.width()) +
              "x" + std::to_string(req.height()));
  for (const auto& px : resp.image.values())
    for (float c : px)
      require(std::isfinite(c) && c >= 0.0f && c <= 1.0f, code, "generated values outside [0, 1]");
  if (req.mode == GenerationMode::outpaint) {
    const auto& init = *req.init_image;
    const auto& mask = *req.mask;
    constexpr float tol = 1.0f / 255.0f + 1e-6f;
    for (std::size_t p = 0; p < mask.size(); ++p) {
      if (mask.values()[p] < 1.0f) continue;
      for (int c = 0; c < 3; ++c)
        require(std::abs(resp.image.values()[p][c] - init.values()[p][c]) <= tol,
                ErrorCode::protocol_violation, "outpaint changed a kept pixel");
    }
  }
}

inline void check_depth_response(const ImageBuffer& img, const DepthMap& depth) {
  require(depth.width() == img.width() && depth.height() == img.height(),
          ErrorCode::malformed_response, "depth size differs from the image");
  for (double d : depth.raster().values())
    require(std::isfinite(d) && d > 0.0, ErrorCode::protocol_violation,
            "depth estimate contains non-positive values");
}

inline void check_caption_response(const std::string& caption) {
  require(!caption.empty(), ErrorCode::protocol_violation, "empty caption");
}

/// Stable key for an image's 8-bit content.
inline std::string image_key(const ImageBuffer& img) {
  Bytes bytes;
  bytes.reserve(img.size() * 3 + 8);
  for (int v : {img.width(), img.height()})
    for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>(v >> s));
  for (const auto& px : img.values())
    for (float c : px) bytes.push_back(to_byte(c));
  return sha256_hex(bytes);
}

// --- mock building blocks --------------------------------------------------

/// For every pixel, the row-major index of the nearest source pixel under the
/// 4-connected (Manhattan) metric; ties go to the smaller row, then column.
/// Returns an empty vector when there are no sources.
inline std::vector<int> nearest_source_map(const Raster<std::uint8_t>& is_source) {
  const int w = is_source.width();
  const int h = is_source.height();
  const int n = w * h;
  std::vector<int> dist(n, -1), src(n, -1);
  std::deque<int> queue;
  for (int p = 0; p < n; ++p)
    if (is_source.values()[p]) {
      dist[p] = 0;
      src[p] = p;
      queue.push_back(p);
    }
  if (queue.empty()) return {};
  while (!queue.empty()) {
    const int p = queue.front();
    queue.pop_front();
    const int x = p % w;
    const int y = p / w;
    const int nbrs[4][2] = {{x, y - 1}, {x - 1, y}, {x + 1, y}, {x, y + 1}};
    for (const auto& nb : nbrs) {
      if (nb[0] < 0 || nb[1] < 0 || nb[0] >= w || nb[1] >= h) continue;
      const int q = nb[1] * w + nb[0];
      if (dist[q] < 0) {
        dist[q] = dist[p] + 1;
        src[q] = src[p];
        queue.push_back(q);
      } else if (dist[q] == dist[p] + 1 && src[p] < src[q]) {
        src[q] = src[p];
      }
    }
  }
  return src;
}

/// Copy each non-source pixel from its nearest source. No sources: unchanged.
template <class T>
Raster<T> fill_nearest(const Raster<T>& values, const Raster<std::uint8_t>& is_source) {
  const auto src = nearest_source_map(is_source);
  if (src.empty()) return values;
  Raster<T> out = values;
  for (std::size_t p = 0; p < out.size(); ++p) out.values()[p] = values.values()[src[p]];
  return out;
}

inline Raster<std::uint8_t> mask_at_least(const WeightMask& m, float threshold) {
  Raster<std::uint8_t> out(m.width(), m.height(), 0);
  for (std::size_t p = 0; p < m.size(); ++p) out.values()[p] = m.values()[p] >= threshold ? 1 : 0;
  return out;
}

/// Prompt-dependent color in [0.5, 1]^3.
inline Rgb prompt_tint(std::string_view prompt) {
  const std::uint64_t h = fnv1a(prompt);
  Rgb tint{};
  for (int c = 0; c < 3; ++c)
    tint[c] = static_cast<float>(0.5 + 0.5 * unit_from_hash(hash_combine(h, static_cast<std::uint64_t>(c))));
  return tint;
}

/// Near surfaces bright, far surfaces dark, tinted by the prompt. Invalid
/// depth pixels take the shade of their nearest valid neighbor.
inline ImageBuffer depth_shade(const DepthMap& depth, std::string_view prompt) {
  const Rgb tint = prompt_tint(prompt);
  Raster<double> d = depth.raster();
  Raster<std::uint8_t> valid(depth.width(), depth.height(), 0);
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) valid(x, y) = depth.valid(x, y) ? 1 : 0;
  d = fill_nearest(d, valid);
  ImageBuffer out(depth.width(), depth.height());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const double z = d.values()[p];
    const double shade = (std::isfinite(z) && z > 0.0) ? 0.2 + 0.8 / (1.0 + 0.5 * z) : 0.2;
    for (int c = 0; c < 3; ++c) out.values()[p][c] = static_cast<float>(shade * tint[c]);
  }
  return out;
}

inline float noise_value(std::uint64_t seed, int u, int v, int channel) {
  std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)));
  h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)));
  h = hash_combine(h, static_cast<std::uint64_t>(channel));
  return static_cast<float>(unit_from_hash(h));
}

inline ImageBuffer noise_image(std::uint64_t seed, int width, int height) {
  ImageBuffer out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) out(x, y)[c] = noise_value(seed, x, y, c);
  return out;
}

/// out = a * w + b * (1 - w), per pixel.
inline ImageBuffer blend(const ImageBuffer& a, const ImageBuffer& b, const WeightMask& w) {
  ImageBuffer out(a.width(), a.height());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const double wp = w.values()[p];
    for (int c = 0; c < 3; ++c)
      out.values()[p][c] = static_cast<float>(wp * a.values()[p][c] + (1.0 - wp) * b.values()[p][c]);
  }
  return out;
}

inline ImageBuffer blend(const ImageBuffer& a, const ImageBuffer& b, double w) {
  return blend(a, b, WeightMask(a.width(), a.height(), static_cast<float>(w)));
}

/// Shared request handling for the two generation mocks. `fill` produces
/// content for unknown pixels from (quantized request, known-pixel mask).
class MockGenerator : public GenerationBackend {
 public:
  GenerationResponse generate(const GenerationRequest& request) const override {
    request.validate();
    const auto desc = descriptor();
    require(desc.capabilities.count(request.mode) > 0, ErrorCode::capability,
            desc.name + " does not support " + std::string(to_string(request.mode)));
    const GenerationRequest req = request.quantized_copy();
    ImageBuffer out;
    switch (req.mode) {
      case GenerationMode::depth_to_image:
        out = synthesize(req, ImageBuffer(req.width(), req.height()),
                         Raster<std::uint8_t>(req.width(), req.height(), 0));
        break;
      case GenerationMode::image_to_image: {
        const auto known = req.mask ? mask_at_least(*req.mask, 0.5f)
                                    : Raster<std::uint8_t>(req.width(), req.height(), 1);
        const ImageBuffer filled = synthesize(req, *req.init_image, known);
        out = req.strength > 0.0 ? blend(restyle(req), filled, req.strength) : filled;
        break;
      }
      case GenerationMode::outpaint: {
        const ImageBuffer filled = synthesize(req, *req.init_image, mask_at_least(*req.mask, 0.5f));
        out = blend(*req.init_image, filled, *req.mask);
        break;
      }
    }
    return {quantized(std::move(out)), desc.name, req.seed};
  }

 protected:
  /// Keep `known` pixels of `base` and invent the rest.
  virtual ImageBuffer synthesize(const GenerationRequest& req, const ImageBuffer& base,
                                 const Raster<std::uint8_t>& known) const = 0;
  /// Content that image_to_image moves toward as strength grows.
  virtual ImageBuffer restyle(const GenerationRequest& req) const = 0;
};

/// Unknown pixels copy the nearest known pixel. With nothing known, the
/// depth map (or a flat tint) is shaded.
class FillNearestMock final : public MockGenerator {
 public:
  static constexpr std::string_view kName = "fill-nearest";

  BackendDescriptor descriptor() const override {
    return {std::string(kName),
            {GenerationMode::depth_to_image, GenerationMode::image_to_image, GenerationMode::outpaint},
            true};
  }

 protected:
  ImageBuffer synthesize(const GenerationRequest& req, const ImageBuffer& base,
                         const Raster<std::uint8_t>& known) const override {
    if (std::find(known.values().begin(), known.values().end(), 1) != known.values().end())
      return fill_nearest(base, known);
    return restyle(req);
  }

  ImageBuffer restyle(const GenerationRequest& req) const override {
    if (req.depth) return depth_shade(*req.depth, req.prompt);
    return depth_shade(DepthMap(req.width(), req.height(), 0.0), req.prompt);
  }
};

/// Unknown pixels are seeded noise: deterministic but uncorrelated with the
/// scene.
class HashNoiseMock final : public MockGenerator {
 public:
  static constexpr std::string_view kName = "hash-noise";

  BackendDescriptor descriptor() const override {
    return {std::string(kName),
            {GenerationMode::depth_to_image, GenerationMode::image_to_image, GenerationMode::outpaint},
            true};
  }

 protected:
  ImageBuffer synthesize(const GenerationRequest& req, const ImageBuffer& base,
                         const Raster<std::uint8_t>& known) const override {
    ImageBuffer out = noise_image(req.seed, req.width(), req.height());
    for (std::size_t p = 0; p < out.size(); ++p)
      if (known.values()[p]) out.values()[p] = base.values()[p];
    return out;
  }

  ImageBuffer restyle(const GenerationRequest& req) const override {
    return noise_image(req.seed, req.width(), req.height());
  }
};

/// Returns registered ground-truth depth for known images and a constant
/// elsewhere. Registered maps are snapped to the wire depth grid.
class OracleDepthMock final : public DepthEstimator {
 public:
  static constexpr std::string_view kName = "oracle-depth";

  explicit OracleDepthMock(double fallback_depth = 3.0, double depth_scale = kDefaultDepthScale)
      : fallback_(fallback_depth), depth_scale_(depth_scale) {
    require(fallback_depth > 0.0, ErrorCode::invalid_argument, "fallback depth must be positive");
  }

  void register_depth(const ImageBuffer& img, const DepthMap& depth) {
    require(depth.width() == img.width() && depth.height() == img.height(),
            ErrorCode::invalid_argument, "registered depth size differs from the image");
    DepthMap q = quantized(depth, depth_scale_);
    for (int y = 0; y < q.height(); ++y)
      for (int x = 0; x < q.width(); ++x)
        if (!q.valid(x, y)) q.set(x, y, fallback_);
    std::lock_guard lock(mutex_);
    table_[image_key(img)] = std::move(q);
  }

  std::string name() const override { return std::string(kName); }

  DepthMap estimate_depth(const ImageBuffer& img) const override {
    {
      std::lock_guard lock(mutex_);
      if (auto it = table_.find(image_key(img)); it != table_.end()) return it->second;
    }
    return quantized(DepthMap(img.width(), img.height(), fallback_), depth_scale_);
  }

 private:
  double fallback_;
  double depth_scale_;
  mutable std::mutex mutex_;
  std::map<std::string, DepthMap> table_;
};

class ConstantDepthMock final : public DepthEstimator {
 public:
  static constexpr std::string_view kName = "constant-depth";

  explicit ConstantDepthMock(double depth = 3.0) : depth_(depth) {
    require(std::isfinite(depth) && depth > 0.0, ErrorCode::invalid_argument,
            "constant depth must be positive");
  }
  std::string name() const override { return std::string(kName); }
  DepthMap estimate_depth(const ImageBuffer& img) const override {
    return DepthMap(img.width(), img.height(), depth_);
  }

 private:
  double depth_;
};

inline constexpr std::string_view kFallbackCaption = "an indoor scene";

class ManifestCaptionMock final : public Captioner {
 public:
  static constexpr std::string_view kName = "manifest-caption";

  void register_caption(const ImageBuffer& img, std::string caption) {
    check_caption_response(caption);
    std::lock_guard lock(mutex_);
    table_[image_key(img)] = std::move(caption);
  }
  std::string name() const override { return std::string(kName); }
  std::string caption(const ImageBuffer& img) const override {
    std::lock_guard lock(mutex_);
    if (auto it = table_.find(image_key(img)); it != table_.end()) return it->second;
    return std::string(kFallbackCaption);
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::string> table_;
};

class ConstantCaptionMock final : public Captioner {
 public:
  static constexpr std::string_view kName = "constant-caption";

  explicit ConstantCaptionMock(std::string text = std::string(kFallbackCaption)) : text_(std::move(text)) {
    check_caption_response(text_);
  }
  std::string name() const override { return std::string(kName); }
  std::string caption(const ImageBuffer&) const override { return text_; }

 private:
  std::string text_;
};

inline std::vector<std::string> mock_generator_names() {
  return {std::string(FillNearestMock::kName), std::string(HashNoiseMock::kName)};
}

inline std::shared_ptr<const GenerationBackend> make_mock_generator(std::string_view name) {
  if (name == FillNearestMock::kName) return std::make_shared<FillNearestMock>();
  if (name == HashNoiseMock::kName) return std::make_shared<HashNoiseMock>();
  fail(ErrorCode::not_found, "unknown mock backend '" + std::string(name) + "'");
}

/// A named generation mock with constant depth and caption helpers.
inline BackendSet make_mock_backends(std::string_view generator) {
  return {make_mock_generator(generator), std::make_shared<ConstantDepthMock>(),
          std::make_shared<ConstantCaptionMock>()};
}

}  // namespace wcgen

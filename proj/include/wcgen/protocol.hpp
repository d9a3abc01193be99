#pragma once

// JSON wire format shared by the remote client and the mock server.
//
//   POST /generate  {mode, prompt, strength, seed, depth_scale,
//                    depth?, init_image?, mask?}  ->  {image, backend_id, seed_used}
//   POST /depth     {image}                       ->  {depth, depth_scale}
//   POST /caption   {image}                       ->  {caption}
//   GET  /health                                  ->  {status: "ok"}
//   GET  /info                                    ->  {name, capabilities, deterministic}
//
// Rasters travel as base64 PNG. Failures answer 4xx/5xx with
// {"error": {"code", "message"}}.

#include <string>

#include "json.hpp"

#include "wcgen/backend.hpp"
#include "wcgen/codec.hpp"

namespace wcgen::wire {

using nlohmann::json;

inline std::string encode_image(const ImageBuffer& img) { return base64_encode(encode_png(img)); }
inline std::string encode_mask(const WeightMask& m) { return base64_encode(encode_png_mask(m)); }
inline std::string encode_depth(const DepthMap& d, double scale) {
  return base64_encode(encode_png_depth(d, scale));
}

namespace detail {

template <class T, class F>
T decode_field(const json& body, const char* key, F&& decode) {
  const auto it = body.find(key);
  require(it != body.end() && it->is_string(), ErrorCode::protocol_violation,
          std::string("missing or non-string field '") + key + "'");
  try {
    return decode(base64_decode(it->template get<std::string>()));
  } catch (const Error& e) {
    fail(ErrorCode::protocol_violation, std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T get_field(const json& body, const char* key) {
  const auto it = body.find(key);
  require(it != body.end(), ErrorCode::protocol_violation,
          std::string("missing field '") + key + "'");
  try {
    return it->template get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::protocol_violation, std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ImageBuffer decode_image_field(const json& body, const char* key) {
  return detail::decode_field<ImageBuffer>(body, key, [](const Bytes& b) { return decode_png_image(b); });
}

inline WeightMask decode_mask_field(const json& body, const char* key) {
  return detail::decode_field<WeightMask>(body, key, [](const Bytes& b) { return decode_png_mask(b); });
}

inline DepthMap decode_depth_field(const json& body, const char* key, double scale) {
  return detail::decode_field<DepthMap>(body, key,
                                        [scale](const Bytes& b) { return decode_png_depth(b, scale); });
}

inline json to_json(const GenerationRequest& req) {
  json body{{"mode", to_string(req.mode)},
            {"prompt", req.prompt},
            {"strength", req.strength},
            {"seed", req.seed},
            {"depth_scale", req.depth_scale}};
  if (req.depth) body["depth"] = encode_depth(*req.depth, req.depth_scale);
  if (req.init_image) body["init_image"] = encode_image(*req.init_image);
  if (req.mask) body["mask"] = encode_mask(*req.mask);
  return body;
}

inline GenerationRequest request_from_json(const json& body) {
  require(body.is_object(), ErrorCode::protocol_violation, "request body must be a JSON object");
  GenerationRequest req;
  try {
    req.mode = mode_from_string(detail::get_field<std::string>(body, "mode"));
  } catch (const Error& e) {
    fail(ErrorCode::protocol_violation, e.what());
  }
  req.prompt = body.value("prompt", std::string());
  req.strength = body.contains("strength") ? detail::get_field<double>(body, "strength") : 1.0;
  req.seed = body.contains("seed") ? detail::get_field<std::uint64_t>(body, "seed") : 0;
  req.depth_scale = body.contains("depth_scale") ? detail::get_field<double>(body, "depth_scale")
                                                 : kDefaultDepthScale;
  require(req.depth_scale > 0.0, ErrorCode::protocol_violation, "depth_scale must be positive");
  if (body.contains("depth")) req.depth = decode_depth_field(body, "depth", req.depth_scale);
  if (body.contains("init_image")) req.init_image = decode_image_field(body, "init_image");
  if (body.contains("mask")) req.mask = decode_mask_field(body, "mask");
  return req;
}

inline json to_json(const GenerationResponse& resp) {
  return {{"image", encode_image(resp.image)},
          {"backend_id", resp.backend_id},
          {"seed_used", resp.seed_used},
          {"width", resp.image.width()},
          {"height", resp.image.height()}};
}

inline GenerationResponse response_from_json(const json& body) {
  require(body.is_object(), ErrorCode::malformed_response, "response body must be a JSON object");
  try {
    GenerationResponse resp;
    resp.image = decode_image_field(body, "image");
    resp.backend_id = detail::get_field<std::string>(body, "backend_id");
    resp.seed_used = detail::get_field<std::uint64_t>(body, "seed_used");
    return resp;
  } catch (const Error& e) {
    fail(ErrorCode::malformed_response, e.what());
  }
}

inline json depth_response(const DepthMap& depth, double scale = kDefaultDepthScale) {
  return {{"depth", encode_depth(depth, scale)}, {"depth_scale", scale}};
}

inline json to_json(const BackendDescriptor& d) {
  json caps = json::array();
  for (auto m : d.capabilities) caps.push_back(to_string(m));
  return {{"name", d.name}, {"capabilities", caps}, {"deterministic", d.deterministic}};
}

inline BackendDescriptor descriptor_from_json(const json& body) {
  try {
    BackendDescriptor d;
    d.name = detail::get_field<std::string>(body, "name");
    for (const auto& m : detail::get_field<std::vector<std::string>>(body, "capabilities"))
      d.capabilities.insert(mode_from_string(m));
    d.deterministic = detail::get_field<bool>(body, "deterministic");
    return d;
  } catch (const Error& e) {
    fail(ErrorCode::malformed_response, e.what());
  }
}

inline json error_body(ErrorCode code, const std::string& message) {
  return {{"error", {{"code", to_string(code)}, {"message", message}}}};
}

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::protocol_violation:
    case ErrorCode::precondition:
      return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::capability: return 422;
    default: return 500;
  }
}

inline ErrorCode code_from_string(std::string_view s) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::checksum_mismatch); ++c)
    if (to_string(static_cast<ErrorCode>(c)) == s) return static_cast<ErrorCode>(c);
  return ErrorCode::transport;
}

}  // namespace wcgen::wire

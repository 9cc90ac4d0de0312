#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "csfusion/error.hpp"

namespace csfusion::belm {

/// How source positions are numbered. `kSegment` restarts the count in each
/// prediction segment so that aligned tokens of the two predictions share a
/// positional code; `kAbsolute` numbers the concatenated input left to right.
enum class PositionScheme { kSegment, kAbsolute };

NLOHMANN_JSON_SERIALIZE_ENUM(PositionScheme,
                             {{PositionScheme::kSegment, "segment"},
                              {PositionScheme::kAbsolute, "absolute"}})

/// Fusion model hyperparameters. Defaults are the desk-scale configuration;
/// `full_scale()` gives the full-size one.
struct BelmConfig {
  int enc_layers = 2;
  int dec_layers = 1;
  int d_model = 64;
  int heads = 2;
  int d_ff = 128;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  int max_len = 96;
  int warmup_steps = 400;
  double peak_lr = 1e-3;
  double grad_clip = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  PositionScheme positions = PositionScheme::kSegment;
  std::uint64_t seed = 1;

  static BelmConfig full_scale() {
    BelmConfig c;
    c.enc_layers = 4;
    c.dec_layers = 2;
    c.d_model = 256;
    c.heads = 4;
    c.d_ff = 1024;
    return c;
  }

  void validate() const {
    auto fail = [](const std::string& what) {
      throw Error(ErrorKind::kInvalidConfig, what);
    };
    if (enc_layers < 1 || dec_layers < 1) fail("layer counts must be positive");
    if (d_model < 1 || heads < 1 || d_ff < 1) fail("dimensions must be positive");
    if (d_model % heads != 0) fail("d_model must be divisible by heads");
    if (max_len < 1) fail("max_len must be positive");
    if (warmup_steps < 0) fail("warmup_steps must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
      fail("label_smoothing must be in [0, 1)");
    }
    if (!(peak_lr > 0.0)) fail("peak_lr must be positive");
    if (!(grad_clip > 0.0)) fail("grad_clip must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
        !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
      fail("invalid Adam coefficients");
    }
  }

  /// Fields that determine parameter shapes.
  bool same_shape(const BelmConfig& o) const {
    return enc_layers == o.enc_layers && dec_layers == o.dec_layers &&
           d_model == o.d_model && heads == o.heads && d_ff == o.d_ff;
  }

  friend bool operator==(const BelmConfig&, const BelmConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    BelmConfig, enc_layers, dec_layers, d_model, heads, d_ff, dropout,
    label_smoothing, max_len, warmup_steps, peak_lr, grad_clip, adam_beta1,
    adam_beta2, adam_eps, positions, seed)

}  // namespace csfusion::belm

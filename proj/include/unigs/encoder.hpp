#pragma once

#include <random>
#include <string>

#include "unigs/params.hpp"
#include "unigs/tensor.hpp"

namespace unigs {

struct EncoderConfig {
  long base_channels = 32;
  long mid_channels = 64;
  long out_channels = 64;  // C, the decoder feature width
  long window = 8;         // cross-view attention window at 1/4 resolution
};

// Per-view conv pyramid to 1/4 resolution with a skip fusion, followed by
// cross-view window attention that is active only for more than one view.
class Encoder {
 public:
  Encoder(ParamStore& ps, std::string prefix, EncoderConfig cfg,
          std::mt19937_64& rng);

  // images [I,3,H,W] with H,W divisible by 4 -> features [I,C,H/4,W/4]
  Tensor forward(const Tensor& images) const;

  // stages, exposed for tests
  Tensor view_features(const Tensor& image) const;  // [3,H,W] -> [C,H/4,W/4]
  Tensor cross_view(const Tensor& feats) const;     // [I,C,H',W'] in and out

  const EncoderConfig& config() const { return cfg_; }

 private:
  Tensor attend_tokens(const Tensor& tokens) const;  // [T,C] -> [T,C]

  ParamStore* ps_;
  std::string pre_;
  EncoderConfig cfg_;
};

}  // namespace unigs

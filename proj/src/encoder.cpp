#include "mtgr/encoder.hpp"

namespace mtgr {

void HstuConfig::validate() const {
  if (n_layer < 1) throw ConfigError("n_layer must be >= 1");
  if (d_model < 1 || n_heads < 1) throw ConfigError("d_model and n_heads must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (!(eps > 0)) throw ConfigError("eps must be positive");
  if (normalizer == NormalizerMode::Fixed && !(fixed_normalizer > 0)) {
    throw ConfigError("fixed normalizer must be positive");
  }
}

HstuConfig HstuConfig::small() {
  HstuConfig c;
  c.n_layer = 3;
  c.d_model = 512;
  c.n_heads = 2;
  return c;
}

HstuConfig HstuConfig::medium() {
  HstuConfig c;
  c.n_layer = 5;
  c.d_model = 768;
  c.n_heads = 3;
  return c;
}

HstuConfig HstuConfig::large() {
  HstuConfig c;
  c.n_layer = 15;
  c.d_model = 768;
  c.n_heads = 3;
  return c;
}

}  // namespace mtgr

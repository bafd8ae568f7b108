#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "json.hpp"

#include "imagine/errors.hpp"

namespace imagine::model {

struct ModelConfig {
  std::size_t d = 300;
  std::size_t encoder_layers = 1;
  std::size_t decoder_layers = 1;
  std::size_t heads = 2;
  std::size_t ffn_dim = 600;
  std::size_t max_positions = 1024;
  std::size_t num_emotions = 32;
  std::size_t max_decode_steps = 30;
  std::size_t vocab_size = 0;
  bool tie_output = false;
  double layer_norm_eps = 1e-6;
  std::uint64_t init_seed = 1;

  void validate() const {
    if (d == 0 || heads == 0 || d % heads != 0)
      throw ConfigError("model.d (" + std::to_string(d) + ") must be divisible by model.heads (" +
                        std::to_string(heads) + ")");
    if (max_decode_steps < 1) throw ConfigError("model.max_decode_steps must be >= 1");
    if (vocab_size <= 5) throw ConfigError("model.vocab_size must exceed the 5 special tokens");
    if (num_emotions < 1) throw ConfigError("model.num_emotions must be >= 1");
    if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("layer counts must be >= 1");
    if (ffn_dim < 1) throw ConfigError("model.ffn_dim must be >= 1");
    if (max_positions < 2) throw ConfigError("model.max_positions must be >= 2");
    if (!(layer_norm_eps > 0)) throw ConfigError("model.layer_norm_eps must be positive");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d", c.d},
                     {"encoder_layers", c.encoder_layers},
                     {"decoder_layers", c.decoder_layers},
                     {"heads", c.heads},
                     {"ffn_dim", c.ffn_dim},
                     {"max_positions", c.max_positions},
                     {"num_emotions", c.num_emotions},
                     {"max_decode_steps", c.max_decode_steps},
                     {"vocab_size", c.vocab_size},
                     {"tie_output", c.tie_output},
                     {"layer_norm_eps", c.layer_norm_eps},
                     {"init_seed", c.init_seed}};
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) j.at(k).get_to(v);
  };
  get("d", c.d);
  get("encoder_layers", c.encoder_layers);
  get("decoder_layers", c.decoder_layers);
  get("heads", c.heads);
  get("ffn_dim", c.ffn_dim);
  get("max_positions", c.max_positions);
  get("num_emotions", c.num_emotions);
  get("max_decode_steps", c.max_decode_steps);
  get("vocab_size", c.vocab_size);
  get("tie_output", c.tie_output);
  get("layer_norm_eps", c.layer_norm_eps);
  get("init_seed", c.init_seed);
}

} // namespace imagine::model

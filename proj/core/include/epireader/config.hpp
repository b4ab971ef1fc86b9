#pragma once

#include <cstdint>
#include <string>

namespace epi {

// Hyperparameters for one training run. Defaults are the "toy" preset used
// by the synthetic tasks; named presets carry the reference settings for
// the benchmark corpora.
struct TrainConfig {
  int embedding_dim = 32;   // D
  int hidden_dim = 32;      // d, extractor GRUs
  int top_k = 5;            // K
  int filter_width = 3;     // m
  int num_filters = 8;      // N_F
  int agg_hidden_dim = 16;  // d_S, aggregation GRU

  double learning_rate = 0.001;
  int batch_size = 32;
  int patience = 2;
  double lambda = 50.0;
  double gamma = 0.04;
  double l2 = 0.001;

  std::uint64_t seed = 1;
  int max_epochs = 20;
  std::size_t min_count = 1;
  // Ablation: stop the second-stage loss gradient from flowing back into the
  // extractor through the slate probabilities.
  bool detach_extractor_probs = false;
  std::string precision = "f64";

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Presets: cbt-ne, cbt-cn, cnn, toy. Throws ConfigError for unknown names.
TrainConfig resolve_preset(const std::string& name);

std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& json_text);

}  // namespace epi

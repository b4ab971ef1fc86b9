#include "epireader/config.hpp"

#include <json.hpp>

#include "epireader/errors.hpp"

namespace epi {

void TrainConfig::validate() const {
  if (embedding_dim < 1 || hidden_dim < 1 || filter_width < 1 ||
      num_filters < 1 || agg_hidden_dim < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (top_k < 1) throw ConfigError("K must be at least 1");
  if (lambda > 0.0 && top_k < 2) {
    throw ConfigError("the margin loss needs K >= 2 for a competitor");
  }
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (gamma <= 0.0) throw ConfigError("gamma must be positive");
  if (l2 < 0.0) throw ConfigError("l2 coefficient must be non-negative");
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (precision != "f64") {
    throw ConfigError("this build computes in f64 only, got precision '" +
                      precision + "'");
  }
}

TrainConfig resolve_preset(const std::string& name) {
  TrainConfig c;
  if (name == "toy") {
    // Defaults.
  } else if (name == "cbt-ne") {
    c.embedding_dim = 300;
    c.hidden_dim = 128;
    c.top_k = 5;
    c.filter_width = 3;
    c.num_filters = 16;
    c.agg_hidden_dim = 32;
  } else if (name == "cbt-cn") {
    c.embedding_dim = 300;
    c.hidden_dim = 128;
    c.top_k = 5;
    c.filter_width = 3;
    c.num_filters = 32;
    c.agg_hidden_dim = 32;
  } else if (name == "cnn") {
    c.embedding_dim = 384;
    c.hidden_dim = 256;
    c.top_k = 10;
    c.filter_width = 3;
    c.num_filters = 32;
    c.agg_hidden_dim = 32;
  } else {
    throw ConfigError("unknown preset '" + name +
                      "' (expected cbt-ne, cbt-cn, cnn or toy)");
  }
  return c;
}

std::string config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["embedding_dim"] = c.embedding_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["top_k"] = c.top_k;
  j["filter_width"] = c.filter_width;
  j["num_filters"] = c.num_filters;
  j["agg_hidden_dim"] = c.agg_hidden_dim;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["patience"] = c.patience;
  j["lambda"] = c.lambda;
  j["gamma"] = c.gamma;
  j["l2"] = c.l2;
  j["seed"] = c.seed;
  j["max_epochs"] = c.max_epochs;
  j["min_count"] = c.min_count;
  j["detach_extractor_probs"] = c.detach_extractor_probs;
  j["precision"] = c.precision;
  return j.dump();
}

TrainConfig config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config JSON: ") + e.what());
  }
  TrainConfig c;
  try {
    j.at("embedding_dim").get_to(c.embedding_dim);
    j.at("hidden_dim").get_to(c.hidden_dim);
    j.at("top_k").get_to(c.top_k);
    j.at("filter_width").get_to(c.filter_width);
    j.at("num_filters").get_to(c.num_filters);
    j.at("agg_hidden_dim").get_to(c.agg_hidden_dim);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("batch_size").get_to(c.batch_size);
    j.at("patience").get_to(c.patience);
    j.at("lambda").get_to(c.lambda);
    j.at("gamma").get_to(c.gamma);
    j.at("l2").get_to(c.l2);
    j.at("seed").get_to(c.seed);
    j.at("max_epochs").get_to(c.max_epochs);
    j.at("min_count").get_to(c.min_count);
    j.at("detach_extractor_probs").get_to(c.detach_extractor_probs);
    j.at("precision").get_to(c.precision);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config JSON missing field: ") + e.what());
  }
  return c;
}

}  // namespace epi

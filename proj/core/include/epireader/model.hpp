#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "epireader/config.hpp"
#include "epireader/data.hpp"
#include "epireader/encoders.hpp"
#include "epireader/extractor.hpp"
#include "epireader/grad_check.hpp"
#include "epireader/reasoner.hpp"
#include "epireader/tensor.hpp"

namespace epi {

// Every trainable weight of the two-stage model.
struct ModelParams {
  EmbeddingTable embedding;
  GruParams text_forward, text_backward;
  GruParams question_forward, question_backward;
  ReasonerParams reasoner;

  static ModelParams init(const TrainConfig& config, int vocab_size, Rng& rng);
  // Stable name -> tensor list covering every trainable tensor exactly once.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  // Weight matrices, filters and embeddings; biases excluded.
  std::vector<std::pair<std::string, Tensor>> weight_tensors() const;
  ModelParams clone() const;
  std::size_t parameter_count() const;
};

// pi_k = e_k p_k / sum_j e_j p_j. All-zero products are an error.
Tensor combine_probabilities(const Tensor& evidence, const Tensor& probs);

// -log P(gold | text, question), over the word-level probabilities.
Tensor loss_extractor(const WordProbs& word_probs, int gold);

// Sum over non-gold slate entries of max(0, gamma - pi_gold + pi_k).
Tensor loss_reasoner(const Tensor& combined, std::size_t gold_index,
                     double gamma);

// l2 * sum of squared weights (biases and the zero padding column excluded
// by construction).
Tensor l2_penalty(const ModelParams& params, double coeff);

// L_E + lambda * L_R + l2 penalty.
Tensor loss_total(const Tensor& extractor_loss, const Tensor& reasoner_loss,
                  double lambda, const ModelParams& params, double l2_coeff);

struct ForwardOptions {
  bool training = false;
  bool run_reasoner = true;
  bool uniform_evidence = false;  // substitute e = 1/K in the combination
  ExtractorStats* stats = nullptr;
};

// One example through both stages.
struct ExampleOutput {
  bool zero_support_gold = false;
  bool no_supported_candidates = false;
  WordProbs word_probs;  // restricted to the candidate set
  CandidateSlate slate;
  EvidenceScores evidence;
  Tensor combined;                 // pi over the slate
  int extractor_prediction = -1;   // argmax of word probabilities
  int full_prediction = -1;        // argmax of pi
};

ExampleOutput forward_example(const ModelParams& params,
                              const TrainConfig& config,
                              const ClozeExample& example,
                              const ForwardOptions& options);

// ADAM with bias correction; beta1 0.9, beta2 0.999, epsilon 1e-8. Updated
// parameters are quantized to f32 so checkpoints round-trip exactly.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<Scalar>> first_moment;
  std::vector<std::vector<Scalar>> second_moment;

  static AdamState init(
      const std::vector<std::pair<std::string, Tensor>>& params);
};

void adam_step(std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double learning_rate);

// Stops after `patience` consecutive epochs without improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // Call once per epoch with the validation metric; true means stop now.
  bool observe(double metric);
  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int streak_ = 0;
  double best_ = -1.0;
};

enum class EvalMode { extractor_only, full };

struct Prediction {
  std::string source_id;
  int gold = -1;
  int predicted_extractor = -1;
  int predicted_full = -1;
  bool zero_support = false;
  std::vector<int> slate;
  std::vector<double> p, e, pi;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t zero_support = 0;
  std::size_t forced = 0;  // must stay 0: no gold-forcing at evaluation
  std::size_t correct_extractor = 0;
  std::size_t correct_full = 0;
  std::vector<Prediction> predictions;

  double accuracy(EvalMode mode) const {
    const std::size_t c =
        mode == EvalMode::full ? correct_full : correct_extractor;
    return total == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(total);
  }
};

// Ranks by the word probabilities (extractor_only) or by pi (full). Workers
// parallelize over examples against the read-only parameters.
EvalReport evaluate(const ModelParams& params, const TrainConfig& config,
                    const std::vector<ClozeExample>& examples, EvalMode mode,
                    int workers = 1, bool uniform_evidence = false);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double loss_extractor = 0.0;
  double loss_reasoner = 0.0;
  double valid_acc_extractor = 0.0;
  double valid_acc_full = 0.0;
  double wallclock_s = 0.0;
  std::size_t skipped_zero_support = 0;
};

struct TrainResult {
  ModelParams params;  // best validation epoch
  int best_epoch = 0;
  double best_accuracy = 0.0;
  std::vector<EpochMetrics> history;
};

// Shuffled seeded mini-batches, per-epoch validation, early stopping on
// full-model validation accuracy; returns the best epoch's parameters.
TrainResult train(const TrainConfig& config, int vocab_size,
                  const std::vector<ClozeExample>& train_set,
                  const std::vector<ClozeExample>& valid_set,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Finite-difference check of the full loss on a built-in micro instance
// (2 sentences, K=2, D=6, d=4, N_F=3, d_S=3). `fault_op` forwards to
// ops::set_backward_fault for negative-control runs.
GradCheckReport model_grad_check(std::uint64_t seed, double epsilon,
                                 double tolerance,
                                 const std::string& fault_op = "");

}  // namespace epi

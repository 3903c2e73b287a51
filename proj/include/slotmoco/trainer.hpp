#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "slotmoco/common.hpp"
#include "slotmoco/contrast.hpp"
#include "slotmoco/corpus.hpp"
#include "slotmoco/crf.hpp"
#include "slotmoco/encoder.hpp"
#include "slotmoco/eval.hpp"
#include "slotmoco/rng.hpp"
#include "slotmoco/tokenizer.hpp"

namespace slotmoco {

struct TrainConfig {
  double lambda = 0.5;  // 0.5 zero-shot, 0.1 few-shot
  double lr = 1e-5;
  std::int64_t warmup_steps = 4000;
  std::int64_t max_steps = 400000;
  int batch_size = 128;
  double tau = 0.07;
  double momentum = 0.999;
  int M = 3;
  Strategy strategy = Strategy::Random;
  double dropout = 0.3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  std::int64_t eval_interval = 200;
  bool skip_optimizer = false;  // test hook: freeze theta_q, keep momentum updates

  void validate() const;
};

struct ModelState {
  EncoderParams query;
  CrfParams crf;
  KeyEncoderState key;
};

// Fresh query encoder + CRF head; key encoder starts as a clone of the query.
ModelState init_model(const EncoderConfig& cfg, std::uint64_t seed, double momentum);

// Query encoder + CRF head, in fixed order. The key encoder is excluded: it
// never receives gradient.
std::vector<ParamRef> trainable_params(ModelState& state);

struct OptimizerState {
  std::vector<Vec> m;  // aligned with trainable_params order
  std::vector<Vec> v;
  std::int64_t step = 0;
};

OptimizerState init_optimizer(const std::vector<ParamRef>& refs);

// lambda * l_cl + (1 - lambda) * l_bio. Anchors without a contrastive set
// contribute l_cl = 0 (the lambda weight is not renormalized).
double combined_loss(double l_cl, double l_bio, double lambda);

// Linear 0 -> lr over [0, warmup], then linear lr -> 0 over [warmup, max].
double lr_at(std::int64_t step, const TrainConfig& cfg);

// Decoupled-weight-decay Adam. Tensors with decay=false (bias vectors,
// layer-norm parameters) are exempt.
void adamw_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                OptimizerState& opt, double lr, const TrainConfig& cfg);

struct StepMetrics {
  std::int64_t step = 0;
  double loss_total = 0.0;
  double loss_bio = 0.0;
  double loss_cl = 0.0;
  double lr = 0.0;
  double coverage = 0.0;  // fraction of the batch with a queried-type span
};

// Corpus-derived context shared across steps.
struct TrainContext {
  const Vocab* vocab = nullptr;
  std::vector<std::string> all_slot_types;  // sorted
  const std::map<std::string, std::set<Phrase>>* lexicon = nullptr;
};

struct LossGrads {
  double loss_total = 0.0;
  double loss_bio = 0.0;
  double loss_cl = 0.0;
  double coverage = 0.0;
  EncoderParams enc_grads;
  CrfParams crf_grads;
};

// Forward + backward of the combined loss over one batch with fixed
// contrastive sets. Gradients flow to the query encoder and CRF head only;
// keys are encoded by the key encoder without dropout.
LossGrads compute_loss_and_grads(ModelState& state,
                                 const std::vector<QueryInstance>& batch,
                                 const std::vector<std::optional<ContrastiveSet>>& sets,
                                 const TrainConfig& cfg, const Vocab& vocab, bool train_mode,
                                 Rng& dropout_rng, bool with_grads);

// Build sets per config, compute gradients, AdamW step, then the momentum
// update of the key encoder.
StepMetrics train_step(const std::vector<QueryInstance>& batch, ModelState& state,
                       OptimizerState& opt, const TrainConfig& cfg, const TrainContext& ctx,
                       Rng& sampler_rng, Rng& dropout_rng);

// Central finite differences of the combined loss against analytic gradients
// over >= 200 coordinates spanning every tensor; returns the worst relative
// error. Dropout off; contrastive sets fixed once. `corrupt` (test hook)
// perturbs the analytic gradients so the check must fail.
double grad_check(ModelState& state, const std::vector<QueryInstance>& batch,
                  const TrainConfig& cfg, const TrainContext& ctx, double epsilon,
                  bool corrupt = false);

struct TrainResult {
  ModelState best;  // checkpoint with the best dev F1 (initial state if never evaluated)
  double best_dev_f1 = -1.0;
  std::int64_t best_step = 0;
  std::string metrics_csv;
};

// Expand every utterance of its domain's slot types into QueryInstances.
// The returned instances point into `corpus`.
std::vector<QueryInstance> expand_corpus_queries(const Corpus& corpus);

TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus,
                  const EncoderConfig& enc_cfg, const TrainConfig& cfg, const Vocab& vocab);

// Checkpoint = weights-file container: query encoder (enc.*), key encoder
// (key.*), CRF head (crf.*), momentum, and optionally optimizer state.
void save_checkpoint(const std::string& path, const ModelState& state, const OptimizerState* opt);

struct Checkpoint {
  ModelState state;
  OptimizerState opt;
  bool has_opt = false;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace slotmoco

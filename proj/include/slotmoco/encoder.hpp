#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slotmoco/common.hpp"
#include "slotmoco/rng.hpp"
#include "slotmoco/tokenizer.hpp"
#include "slotmoco/weights_io.hpp"

namespace slotmoco {

// Post-layer-norm transformer encoder over the two-segment input
// [CLS] t [SEP] w [SEP]. One parameter set instantiates both the query and
// the key encoder.

struct LayerParams {
  Mat w_q, w_k, w_v, w_o;  // d_model x d_model
  Vec b_q, b_k, b_v, b_o;  // d_model
  Mat w_ff1;               // d_model x d_ff
  Vec b_ff1;               // d_ff
  Mat w_ff2;               // d_ff x d_model
  Vec b_ff2;               // d_model
  Vec ln1_gain, ln1_bias;  // d_model
  Vec ln2_gain, ln2_bias;  // d_model
};

struct EncoderParams {
  EncoderConfig config;
  Mat tok_emb;  // vocab_size x d_model
  Mat pos_emb;  // max_len x d_model
  Mat seg_emb;  // n_segments x d_model
  Vec emb_ln_gain, emb_ln_bias;
  std::vector<LayerParams> layers;
};

// All-zero parameter structure with the shapes of `config`; used for
// gradient accumulation buffers.
EncoderParams zero_params(const EncoderConfig& config);

// Weight matrices and embeddings ~ N(0, 0.02^2); layer-norm gains 1, all
// biases 0. Deterministic given seed.
EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed);

// Deep value copy; used to spawn the key encoder from the query encoder.
EncoderParams clone_params(const EncoderParams& params);

// Fixed-order flat registry over every tensor. The same order is used for
// gradients, optimizer state, serialization, and the momentum update.
std::vector<ParamRef> collect_params(EncoderParams& params, const std::string& prefix = "enc.");

struct EncoderOutput {
  Mat all_hidden;  // L x d_model
  Mat H;           // n x d_model, rows gathered at utterance_positions
  Vec h_cls;       // all_hidden row 0
};

struct LnCache {
  Mat xhat;  // normalized input, per row
  Vec rstd;  // 1 / sqrt(var + eps), per row
};

struct LayerCache {
  Mat x_in;                          // layer input
  Mat q, k, v;                       // post-projection
  std::vector<Mat> attn_probs;       // per head, softmax output (pre-dropout)
  std::vector<Mat> attn_prob_masks;  // per head dropout masks; empty when off
  Mat context;                       // concatenated head outputs (pre W_o)
  Mat attn_out_mask;
  Mat resid1;  // x_in + dropped attention output
  LnCache ln1;
  Mat y1;      // LN1 output
  Mat ff_pre;  // pre-GELU
  Mat ff_act;  // post-GELU
  Mat ff_out_mask;
  Mat resid2;
  LnCache ln2;
};

struct EncoderCache {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  LnCache ln0;
  Mat emb_mask;
  std::vector<LayerCache> layers;
};

// Deterministic when train_mode is off. `cache` enables encoder_backward.
EncoderOutput encoder_forward(const EncoderParams& params, const EncodedQuery& input,
                              bool train_mode, Rng& dropout_rng, EncoderCache* cache = nullptr);
// Eval-mode convenience overload.
EncoderOutput encoder_forward(const EncoderParams& params, const EncodedQuery& input);

// Accumulates d loss / d params into `grads` given d loss / d all_hidden.
void encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                      const Mat& d_all_hidden, EncoderParams& grads);

void save_weights(const EncoderParams& params, const std::string& path);
EncoderParams load_weights(const std::string& path);
// Errors when the file header disagrees with `expected`.
EncoderParams load_weights(const std::string& path, const EncoderConfig& expected);

}  // namespace slotmoco

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slotmoco/common.hpp"
#include "slotmoco/corpus.hpp"
#include "slotmoco/encoder.hpp"
#include "slotmoco/rng.hpp"
#include "slotmoco/tokenizer.hpp"

namespace slotmoco {

enum class Strategy { Template, Synthetic, Random, Concat };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

// Kind of a constructed set (a Random draw resolves to Template or Synthetic).
enum class SetKind { Template, Synthetic, Concat };

// One key-encoder input: the anchor utterance with its queried-type spans
// replaced, encoded against the anchor's slot-type segment.
struct KeySample {
  std::vector<std::string> words;
  EncodedQuery encoded;
};

struct ContrastiveSet {
  SetKind kind = SetKind::Template;
  EncodedQuery anchor;
  KeySample positive;
  std::vector<KeySample> negatives;  // M-1 per source set
};

bool has_queried_span(const QueryInstance& query);

// Positive: queried-type spans replaced by the slot type's own word tokens.
// Negatives: the same replacement with M-1 distinct other slot types, drawn
// seeded-uniform without replacement from all_slot_types.
ContrastiveSet make_template_set(const QueryInstance& query,
                                 const std::vector<std::string>& all_slot_types, int M,
                                 const Vocab& vocab, int max_len, Rng& rng);

// Positive: each queried-type span replaced by a different same-type lexicon
// phrase (falls back to the span's own text, with a warning, when the lexicon
// knows no other phrase). Negatives: spans replaced by phrases of a drawn
// other type.
ContrastiveSet make_synthetic_set(const QueryInstance& query,
                                  const std::map<std::string, std::set<Phrase>>& lexicon, int M,
                                  const Vocab& vocab, int max_len, Rng& rng);

// Template/Synthetic delegate; Random draws one of the two with probability
// 0.5 each; Concat keeps all 2(M-1) negatives and one of the two positives,
// chosen uniformly (the other positive is discarded).
ContrastiveSet make_contrastive_set(Strategy strategy, const QueryInstance& query,
                                    const std::vector<std::string>& all_slot_types,
                                    const std::map<std::string, std::set<Phrase>>& lexicon, int M,
                                    const Vocab& vocab, int max_len, Rng& rng);

// L2-normalized [CLS] representation.
Vec represent(const EncoderParams& params, const EncodedQuery& input);

// -log( exp(q.k+ / tau) / sum_k exp(q.k / tau) ), max-subtracted.
double info_nce(const Vec& q, const std::vector<Vec>& keys, int pos_index, double tau);

// Loss plus its gradient with respect to q (keys receive no gradient).
double info_nce_backward(const Vec& q, const std::vector<Vec>& keys, int pos_index, double tau,
                         Vec& d_q);

struct KeyEncoderState {
  EncoderParams params;
  double momentum = 0.999;
};

// theta_k <- m * theta_k + (1 - m) * theta_q, elementwise over all tensors.
void momentum_update(KeyEncoderState& state, EncoderParams& theta_q);

}  // namespace slotmoco

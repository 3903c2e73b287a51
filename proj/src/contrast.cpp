#include "slotmoco/contrast.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace slotmoco {

Strategy parse_strategy(const std::string& name) {
  if (name == "template") return Strategy::Template;
  if (name == "synthetic") return Strategy::Synthetic;
  if (name == "random") return Strategy::Random;
  if (name == "concat") return Strategy::Concat;
  throw DataError("unknown sampler strategy \"" + name +
                  "\" (expected template, synthetic, random, or concat)");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Template: return "template";
    case Strategy::Synthetic: return "synthetic";
    case Strategy::Random: return "random";
    case Strategy::Concat: return "concat";
  }
  return "?";
}

bool has_queried_span(const QueryInstance& query) {
  for (const SlotSpan& s : query.utterance->spans) {
    if (s.slot_type == query.slot_type) return true;
  }
  return false;
}

namespace {

// Spans of the queried type, in utterance order.
std::vector<SlotSpan> queried_spans(const QueryInstance& query) {
  std::vector<SlotSpan> out;
  for (const SlotSpan& s : query.utterance->spans) {
    if (s.slot_type == query.slot_type) out.push_back(s);
  }
  return out;
}

// Rebuild the utterance with each queried-type span replaced by the phrase
// produced by `replacement(span_index)`. Other words (including other types'
// spans) stay verbatim.
std::vector<std::string> replace_spans(const Utterance& utt, const std::vector<SlotSpan>& spans,
                                       const std::vector<Phrase>& replacements) {
  std::vector<std::string> out;
  std::size_t next = 0;
  int i = 0;
  int n = static_cast<int>(utt.words.size());
  while (i < n) {
    if (next < spans.size() && spans[next].start == i) {
      const Phrase& r = replacements[next];
      out.insert(out.end(), r.begin(), r.end());
      i = spans[next].end;
      ++next;
    } else {
      out.push_back(utt.words[static_cast<std::size_t>(i)]);
      ++i;
    }
  }
  return out;
}

KeySample encode_key(const QueryInstance& query, std::vector<std::string> words,
                     const Vocab& vocab, int max_len) {
  KeySample key;
  key.encoded = encode_query(vocab, query.slot_type, words, max_len);
  key.words = std::move(words);
  return key;
}

void check_common(const QueryInstance& query, int M) {
  if (!query.utterance) throw DataError("contrastive set: query has no utterance");
  if (M < 2) throw DataError("contrastive set size M must be >= 2");
  if (!has_queried_span(query)) {
    throw DataError("contrastive set: utterance has no span of slot type " + query.slot_type +
                    " (callers must skip the contrastive term for such anchors)");
  }
}

}  // namespace

ContrastiveSet make_template_set(const QueryInstance& query,
                                 const std::vector<std::string>& all_slot_types, int M,
                                 const Vocab& vocab, int max_len, Rng& rng) {
  check_common(query, M);
  std::vector<std::string> others;
  for (const std::string& t : all_slot_types) {
    if (t != query.slot_type) others.push_back(t);
  }
  if (static_cast<int>(others.size()) < M - 1) {
    throw DataError("template set needs " + std::to_string(M - 1) +
                    " other slot types, corpus has " + std::to_string(others.size()));
  }

  std::vector<SlotSpan> spans = queried_spans(query);
  ContrastiveSet set;
  set.kind = SetKind::Template;
  set.anchor = encode_query(vocab, query.slot_type, query.utterance->words, max_len);

  std::vector<Phrase> pos(spans.size(), slot_type_tokens(query.slot_type));
  set.positive = encode_key(query, replace_spans(*query.utterance, spans, pos), vocab, max_len);

  for (std::size_t idx : rng.sample_without_replacement(others.size(), static_cast<std::size_t>(M - 1))) {
    const std::string& neg_type = others[idx];
    std::vector<Phrase> neg(spans.size(), slot_type_tokens(neg_type));
    set.negatives.push_back(
        encode_key(query, replace_spans(*query.utterance, spans, neg), vocab, max_len));
  }
  return set;
}

ContrastiveSet make_synthetic_set(const QueryInstance& query,
                                  const std::map<std::string, std::set<Phrase>>& lexicon, int M,
                                  const Vocab& vocab, int max_len, Rng& rng) {
  check_common(query, M);
  std::vector<std::string> other_types;
  for (const auto& [type, phrases] : lexicon) {
    if (type != query.slot_type && !phrases.empty()) other_types.push_back(type);
  }
  if (other_types.empty()) {
    throw DataError("synthetic set: lexicon has no phrases under any other slot type");
  }

  std::vector<SlotSpan> spans = queried_spans(query);
  ContrastiveSet set;
  set.kind = SetKind::Synthetic;
  set.anchor = encode_query(vocab, query.slot_type, query.utterance->words, max_len);

  std::vector<Phrase> same_type;
  if (auto it = lexicon.find(query.slot_type); it != lexicon.end()) {
    same_type.assign(it->second.begin(), it->second.end());
  }
  std::vector<Phrase> pos;
  for (const SlotSpan& s : spans) {
    Phrase current(query.utterance->words.begin() + s.start, query.utterance->words.begin() + s.end);
    std::vector<Phrase> candidates;
    for (const Phrase& p : same_type) {
      if (p != current) candidates.push_back(p);
    }
    if (candidates.empty()) {
      std::cerr << "warning: lexicon knows no other phrase of type " << query.slot_type
                << "; synthetic positive reuses the span text\n";
      pos.push_back(current);
    } else {
      pos.push_back(candidates[rng.uniform_int(candidates.size())]);
    }
  }
  set.positive = encode_key(query, replace_spans(*query.utterance, spans, pos), vocab, max_len);

  for (int k = 0; k < M - 1; ++k) {
    const std::string& neg_type = other_types[rng.uniform_int(other_types.size())];
    std::vector<Phrase> pool(lexicon.at(neg_type).begin(), lexicon.at(neg_type).end());
    std::vector<Phrase> neg;
    for (std::size_t i = 0; i < spans.size(); ++i) {
      neg.push_back(pool[rng.uniform_int(pool.size())]);
    }
    set.negatives.push_back(
        encode_key(query, replace_spans(*query.utterance, spans, neg), vocab, max_len));
  }
  return set;
}

ContrastiveSet make_contrastive_set(Strategy strategy, const QueryInstance& query,
                                    const std::vector<std::string>& all_slot_types,
                                    const std::map<std::string, std::set<Phrase>>& lexicon, int M,
                                    const Vocab& vocab, int max_len, Rng& rng) {
  switch (strategy) {
    case Strategy::Template:
      return make_template_set(query, all_slot_types, M, vocab, max_len, rng);
    case Strategy::Synthetic:
      return make_synthetic_set(query, lexicon, M, vocab, max_len, rng);
    case Strategy::Random:
      if (rng.bernoulli(0.5)) {
        return make_template_set(query, all_slot_types, M, vocab, max_len, rng);
      }
      return make_synthetic_set(query, lexicon, M, vocab, max_len, rng);
    case Strategy::Concat: {
      ContrastiveSet tem = make_template_set(query, all_slot_types, M, vocab, max_len, rng);
      ContrastiveSet syn = make_synthetic_set(query, lexicon, M, vocab, max_len, rng);
      ContrastiveSet set;
      set.kind = SetKind::Concat;
      set.anchor = tem.anchor;
      set.positive = rng.uniform_int(2) == 0 ? tem.positive : syn.positive;
      set.negatives = std::move(tem.negatives);
      for (KeySample& k : syn.negatives) set.negatives.push_back(std::move(k));
      return set;
    }
  }
  throw DataError("unreachable strategy");
}

Vec represent(const EncoderParams& params, const EncodedQuery& input) {
  EncoderOutput out = encoder_forward(params, input);
  double norm = out.h_cls.norm();
  if (!(norm > 1e-12)) throw NumericError("representation has (near-)zero norm");
  return out.h_cls / norm;
}

double info_nce(const Vec& q, const std::vector<Vec>& keys, int pos_index, double tau) {
  Vec unused;
  return info_nce_backward(q, keys, pos_index, tau, unused);
}

double info_nce_backward(const Vec& q, const std::vector<Vec>& keys, int pos_index, double tau,
                         Vec& d_q) {
  if (keys.empty()) throw DataError("info_nce: empty key set");
  if (pos_index < 0 || pos_index >= static_cast<int>(keys.size())) {
    throw DataError("info_nce: positive index out of range");
  }
  if (!(tau > 0.0)) throw DataError("info_nce: tau must be positive");

  const std::size_t m = keys.size();
  std::vector<double> logits(m);
  double mx = -1e300;
  for (std::size_t j = 0; j < m; ++j) {
    logits[j] = q.dot(keys[j]) / tau;
    mx = std::max(mx, logits[j]);
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < m; ++j) denom += std::exp(logits[j] - mx);
  double loss = -(logits[static_cast<std::size_t>(pos_index)] - mx - std::log(denom));

  d_q = Vec::Zero(q.size());
  for (std::size_t j = 0; j < m; ++j) {
    double p = std::exp(logits[j] - mx) / denom;
    double w = (p - (static_cast<int>(j) == pos_index ? 1.0 : 0.0)) / tau;
    d_q += w * keys[j];
  }
  return loss;
}

void momentum_update(KeyEncoderState& state, EncoderParams& theta_q) {
  std::vector<ParamRef> k = collect_params(state.params);
  std::vector<ParamRef> q = collect_params(theta_q);
  if (k.size() != q.size()) throw DataError("momentum update: parameter tensor count mismatch");
  const double m = state.momentum;
  for (std::size_t t = 0; t < k.size(); ++t) {
    if (k[t].size() != q[t].size()) {
      throw DataError("momentum update: shape mismatch for " + k[t].name);
    }
    for (std::int64_t i = 0; i < k[t].size(); ++i) {
      k[t].data[i] = m * k[t].data[i] + (1.0 - m) * q[t].data[i];
    }
  }
}

}  // namespace slotmoco

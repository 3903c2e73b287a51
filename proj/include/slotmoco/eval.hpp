#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slotmoco/common.hpp"
#include "slotmoco/corpus.hpp"
#include "slotmoco/crf.hpp"
#include "slotmoco/encoder.hpp"
#include "slotmoco/tokenizer.hpp"

namespace slotmoco {

// Spans read from one predicted BIO sequence. A span starts at each B and
// runs through consecutive I; a stray I (not preceded by B/I) starts a new
// span (lenient reading); O terminates.
std::vector<SlotSpan> extract_spans(const std::vector<Label>& labels, const std::string& slot_type);

struct F1Counts {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

// Exact (slot_type, start, end) matching; each gold span matchable once.
F1Counts span_f1(const std::vector<SlotSpan>& gold, const std::vector<SlotSpan>& predicted);

F1Counts counts_to_f1(std::int64_t tp, std::int64_t fp, std::int64_t fn);

struct F1Report {
  struct Row {
    std::string domain;
    F1Counts counts;
  };
  std::vector<Row> rows;  // one per domain, sorted
  F1Counts average;       // macro average of P/R/F1; counts are sums
};

// Labels for one (slot type, utterance) query.
using Predictor = std::function<std::vector<Label>(const std::string& slot_type, const Utterance&)>;

// For each utterance and each slot type of its domain, predict, extract
// spans, and accumulate exact-match counts per domain.
F1Report evaluate(const Predictor& predict, const Corpus& corpus,
                  const std::map<std::string, std::set<std::string>>& domain_slots);

std::string report_csv(const F1Report& report);
std::string report_table(const F1Report& report);

Predictor make_crf_predictor(const EncoderParams& enc, const CrfParams& crf, const Vocab& vocab);

}  // namespace slotmoco

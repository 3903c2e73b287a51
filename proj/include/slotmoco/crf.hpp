#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slotmoco/common.hpp"
#include "slotmoco/rng.hpp"
#include "slotmoco/weights_io.hpp"

namespace slotmoco {

// Linear projection to {O,B,I} logits plus a linear-chain CRF.
// Label order is fixed: O=0, B=1, I=2.
struct CrfParams {
  Mat proj_w;  // d_model x 3
  Vec proj_b;  // 3
  Mat trans;   // 3x3, trans(a,b) = score of a -> b
  Vec start;   // 3
  Vec end;     // 3
};

CrfParams zero_crf(int d_model);
CrfParams init_crf(int d_model, std::uint64_t seed);

std::vector<ParamRef> collect_crf_params(CrfParams& crf, const std::string& prefix = "crf.");

// Emission logits: row i = W^T h_i + b.  H is n x d_model; result n x 3.
Mat emissions(const CrfParams& crf, const Mat& H);

// start[y1] + sum_i e(i, y_i) + sum_i trans(y_i, y_{i+1}) + end[y_n].
double path_score(const Mat& e, const std::vector<Label>& labels, const CrfParams& crf);

// log sum over all 3^n label sequences of exp(path_score), via the
// log-space forward recursion.
double log_partition(const Mat& e, const CrfParams& crf);

// log_partition - path_score(gold); always >= 0.
double nll(const Mat& e, const std::vector<Label>& labels, const CrfParams& crf);

// Highest-scoring label sequence.  Ties are broken by preferring the
// smaller label index (O < B < I) at each backtracking step.
std::vector<Label> viterbi(const Mat& e, const CrfParams& crf);

// Gradient of nll with respect to the emissions (marginals minus one-hot
// gold), returned as an n x 3 matrix.  If grads is non-null, the gradients
// for trans/start/end are accumulated into it (proj_w/proj_b gradients are
// the caller's chain through d_e).
Mat nll_backward(const Mat& e, const std::vector<Label>& labels, const CrfParams& crf,
                 CrfParams* grads = nullptr);

}  // namespace slotmoco

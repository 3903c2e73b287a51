#include "slotmoco/crf.hpp"

#include <array>
#include <cmath>

namespace slotmoco {

namespace {

constexpr int K = kNumLabels;

double logsumexp3(double a, double b, double c) {
  double m = std::max(a, std::max(b, c));
  return m + std::log(std::exp(a - m) + std::exp(b - m) + std::exp(c - m));
}

void check_labels(const Mat& e, const std::vector<Label>& labels) {
  if (labels.empty()) throw DataError("crf: empty label sequence");
  if (static_cast<Eigen::Index>(labels.size()) != e.rows()) {
    throw DataError("crf: label sequence length " + std::to_string(labels.size()) +
                    " does not match emissions rows " + std::to_string(e.rows()));
  }
}

}  // namespace

CrfParams zero_crf(int d_model) {
  if (d_model < 1) throw DataError("crf: d_model must be >= 1");
  CrfParams crf;
  crf.proj_w = Mat::Zero(d_model, K);
  crf.proj_b = Vec::Zero(K);
  crf.trans = Mat::Zero(K, K);
  crf.start = Vec::Zero(K);
  crf.end = Vec::Zero(K);
  return crf;
}

CrfParams init_crf(int d_model, std::uint64_t seed) {
  CrfParams crf = zero_crf(d_model);
  Rng rng = Rng::substream(seed, "init.crf");
  for (Eigen::Index j = 0; j < crf.proj_w.cols(); ++j) {
    for (Eigen::Index i = 0; i < crf.proj_w.rows(); ++i) {
      crf.proj_w(i, j) = rng.normal(0.0, 0.02);
    }
  }
  return crf;
}

std::vector<ParamRef> collect_crf_params(CrfParams& crf, const std::string& prefix) {
  std::vector<ParamRef> refs;
  refs.push_back(ParamRef{prefix + "proj_w", crf.proj_w.data(), crf.proj_w.rows(), crf.proj_w.cols(), 2, true});
  refs.push_back(ParamRef{prefix + "proj_b", crf.proj_b.data(), crf.proj_b.rows(), 1, 1, false});
  refs.push_back(ParamRef{prefix + "trans", crf.trans.data(), crf.trans.rows(), crf.trans.cols(), 2, true});
  refs.push_back(ParamRef{prefix + "start", crf.start.data(), crf.start.rows(), 1, 1, false});
  refs.push_back(ParamRef{prefix + "end", crf.end.data(), crf.end.rows(), 1, 1, false});
  return refs;
}

Mat emissions(const CrfParams& crf, const Mat& H) {
  if (H.cols() != crf.proj_w.rows()) {
    throw DataError("crf: hidden-state width " + std::to_string(H.cols()) +
                    " does not match projection rows " + std::to_string(crf.proj_w.rows()));
  }
  return (H * crf.proj_w).rowwise() + crf.proj_b.transpose();
}

double path_score(const Mat& e, const std::vector<Label>& labels, const CrfParams& crf) {
  check_labels(e, labels);
  const Eigen::Index n = e.rows();
  int prev = static_cast<int>(labels[0]);
  double s = crf.start(prev) + e(0, prev);
  for (Eigen::Index i = 1; i < n; ++i) {
    int cur = static_cast<int>(labels[static_cast<std::size_t>(i)]);
    s += crf.trans(prev, cur);
    s += e(i, cur);
    prev = cur;
  }
  s += crf.end(prev);
  return s;
}

double log_partition(const Mat& e, const CrfParams& crf) {
  const Eigen::Index n = e.rows();
  if (n < 1) throw DataError("crf: empty emissions");
  Vec alpha(K);
  for (int y = 0; y < K; ++y) alpha(y) = crf.start(y) + e(0, y);
  for (Eigen::Index i = 1; i < n; ++i) {
    Vec next(K);
    for (int y = 0; y < K; ++y) {
      next(y) = logsumexp3(alpha(0) + crf.trans(0, y), alpha(1) + crf.trans(1, y),
                           alpha(2) + crf.trans(2, y)) +
                e(i, y);
    }
    alpha = next;
  }
  return logsumexp3(alpha(0) + crf.end(0), alpha(1) + crf.end(1), alpha(2) + crf.end(2));
}

double nll(const Mat& e, const std::vector<Label>& labels, const CrfParams& crf) {
  return log_partition(e, crf) - path_score(e, labels, crf);
}

std::vector<Label> viterbi(const Mat& e, const CrfParams& crf) {
  const Eigen::Index n = e.rows();
  if (n < 1) throw DataError("crf: empty emissions");
  Mat delta(n, K);
  std::vector<std::array<int, K>> bp(static_cast<std::size_t>(n));
  for (int y = 0; y < K; ++y) delta(0, y) = crf.start(y) + e(0, y);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (int y = 0; y < K; ++y) {
      int best_p = 0;
      double best = delta(i - 1, 0) + crf.trans(0, y);
      for (int p = 1; p < K; ++p) {
        double cand = delta(i - 1, p) + crf.trans(p, y);
        if (cand > best) {
          best = cand;
          best_p = p;
        }
      }
      delta(i, y) = best + e(i, y);
      bp[static_cast<std::size_t>(i)][static_cast<std::size_t>(y)] = best_p;
    }
  }
  int last = 0;
  double best = delta(n - 1, 0) + crf.end(0);
  for (int y = 1; y < K; ++y) {
    double cand = delta(n - 1, y) + crf.end(y);
    if (cand > best) {
      best = cand;
      last = y;
    }
  }
  std::vector<Label> labels(static_cast<std::size_t>(n));
  labels[static_cast<std::size_t>(n - 1)] = static_cast<Label>(last);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    last = bp[static_cast<std::size_t>(i)][static_cast<std::size_t>(last)];
    labels[static_cast<std::size_t>(i - 1)] = static_cast<Label>(last);
  }
  return labels;
}

Mat nll_backward(const Mat& e, const std::vector<Label>& labels, const CrfParams& crf,
                 CrfParams* grads) {
  check_labels(e, labels);
  const Eigen::Index n = e.rows();

  Mat alpha(n, K), beta(n, K);
  for (int y = 0; y < K; ++y) alpha(0, y) = crf.start(y) + e(0, y);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (int y = 0; y < K; ++y) {
      alpha(i, y) = logsumexp3(alpha(i - 1, 0) + crf.trans(0, y),
                               alpha(i - 1, 1) + crf.trans(1, y),
                               alpha(i - 1, 2) + crf.trans(2, y)) +
                    e(i, y);
    }
  }
  for (int y = 0; y < K; ++y) beta(n - 1, y) = crf.end(y);
  for (Eigen::Index i = n - 2; i >= 0; --i) {
    for (int y = 0; y < K; ++y) {
      beta(i, y) = logsumexp3(crf.trans(y, 0) + e(i + 1, 0) + beta(i + 1, 0),
                              crf.trans(y, 1) + e(i + 1, 1) + beta(i + 1, 1),
                              crf.trans(y, 2) + e(i + 1, 2) + beta(i + 1, 2));
    }
  }
  double log_z = logsumexp3(alpha(n - 1, 0) + beta(n - 1, 0), alpha(n - 1, 1) + beta(n - 1, 1),
                            alpha(n - 1, 2) + beta(n - 1, 2));

  Mat d_e(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int y = 0; y < K; ++y) {
      d_e(i, y) = std::exp(alpha(i, y) + beta(i, y) - log_z);
    }
    d_e(i, static_cast<int>(labels[static_cast<std::size_t>(i)])) -= 1.0;
  }

  if (grads) {
    for (int y = 0; y < K; ++y) {
      grads->start(y) += std::exp(alpha(0, y) + beta(0, y) - log_z);
      grads->end(y) += std::exp(alpha(n - 1, y) + beta(n - 1, y) - log_z);
    }
    grads->start(static_cast<int>(labels.front())) -= 1.0;
    grads->end(static_cast<int>(labels.back())) -= 1.0;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      for (int a = 0; a < K; ++a) {
        for (int b = 0; b < K; ++b) {
          grads->trans(a, b) +=
              std::exp(alpha(i, a) + crf.trans(a, b) + e(i + 1, b) + beta(i + 1, b) - log_z);
        }
      }
      grads->trans(static_cast<int>(labels[static_cast<std::size_t>(i)]),
                   static_cast<int>(labels[static_cast<std::size_t>(i + 1)])) -= 1.0;
    }
  }
  return d_e;
}

}  // namespace slotmoco

#include <doctest.h>

#include <cmath>
#include <vector>

#include "slotmoco/crf.hpp"
#include "slotmoco/rng.hpp"

using namespace slotmoco;

namespace {

// ---- exhaustive 3^n enumeration oracle -------------------------------------
// Everything here is independent of the forward/Viterbi implementations: paths
// are scored through path_score's public contract (start + emissions +
// transitions + end), enumerated literally.

std::vector<std::vector<Label>> all_paths(int n) {
  std::vector<std::vector<Label>> out;
  std::vector<int> cur(static_cast<std::size_t>(n), 0);
  while (true) {
    std::vector<Label> path;
    for (int v : cur) path.push_back(static_cast<Label>(v));
    out.push_back(path);
    int i = n - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == 2) {
      cur[static_cast<std::size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
  }
  return out;
}

// Same accumulation order as path_score, written out independently.
double oracle_score(const Mat& e, const std::vector<Label>& path, const CrfParams& crf) {
  int y0 = static_cast<int>(path[0]);
  double s = crf.start(y0) + e(0, y0);
  for (std::size_t i = 1; i < path.size(); ++i) {
    s += crf.trans(static_cast<int>(path[i - 1]), static_cast<int>(path[i]));
    s += e(static_cast<Eigen::Index>(i), static_cast<int>(path[i]));
  }
  s += crf.end(static_cast<int>(path.back()));
  return s;
}

double oracle_log_partition(const Mat& e, const CrfParams& crf) {
  double mx = -1e300;
  std::vector<double> scores;
  for (const auto& p : all_paths(static_cast<int>(e.rows()))) {
    scores.push_back(oracle_score(e, p, crf));
    mx = std::max(mx, scores.back());
  }
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - mx);
  return mx + std::log(acc);
}

// Among all maximum-score paths, the one the backtracking tie rule yields:
// smallest label at the last position, then smallest at the previous, etc.
std::vector<Label> oracle_viterbi(const Mat& e, const CrfParams& crf) {
  std::vector<Label> best;
  double best_score = -1e300;
  for (const auto& p : all_paths(static_cast<int>(e.rows()))) {
    double s = oracle_score(e, p, crf);
    if (s > best_score) {
      best_score = s;
      best = p;
      continue;
    }
    if (s == best_score) {
      for (std::size_t r = p.size(); r-- > 0;) {
        if (p[r] != best[r]) {
          if (p[r] < best[r]) best = p;
          break;
        }
      }
    }
  }
  return best;
}

CrfParams random_crf(Rng& rng) {
  CrfParams crf = zero_crf(4);
  for (int a = 0; a < 3; ++a) {
    crf.start(a) = rng.normal(0.0, 1.0);
    crf.end(a) = rng.normal(0.0, 1.0);
    for (int b = 0; b < 3; ++b) crf.trans(a, b) = rng.normal(0.0, 1.0);
  }
  return crf;
}

Mat random_emissions(Rng& rng, int n, double scale = 1.0) {
  Mat e(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int y = 0; y < 3; ++y) e(i, y) = rng.normal(0.0, scale);
  }
  return e;
}

// Values on a coarse grid of halves, so exact score ties are common.
double gridded(Rng& rng) { return 0.5 * static_cast<double>(rng.uniform_int(5)) - 1.0; }

}  // namespace

TEST_CASE("emissions: zero weight gives bias rows; zero hidden gives bias") {
  CrfParams crf = zero_crf(2);
  crf.proj_b << 1, 2, 3;
  Mat H(2, 2);
  H << 5, -4, 0, 0;
  Mat e = emissions(crf, H);
  CHECK(e.row(0) == Eigen::RowVector3d(1, 2, 3));
  CHECK(e.row(1) == Eigen::RowVector3d(1, 2, 3));
}

TEST_CASE("emissions: hand-computed case and dimension check") {
  CrfParams crf = zero_crf(2);
  crf.proj_w << 1, 0, 2, 0, 1, 1;
  crf.proj_b << 0.5, -1, 0;
  Mat H(2, 2);
  H << 1, 2, 3, 4;
  Mat e = emissions(crf, H);
  CHECK(e(0, 0) == doctest::Approx(1.5));
  CHECK(e(0, 1) == doctest::Approx(1.0));
  CHECK(e(0, 2) == doctest::Approx(4.0));
  CHECK(e(1, 0) == doctest::Approx(3.5));
  CHECK(e(1, 1) == doctest::Approx(3.0));
  CHECK(e(1, 2) == doctest::Approx(10.0));

  Mat bad(2, 3);
  bad.setZero();
  CHECK_THROWS_AS(emissions(crf, bad), DataError);
}

TEST_CASE("path_score: single term, zero case, hand expansion") {
  CrfParams crf = zero_crf(1);
  Mat e(1, 3);
  e << 0.5, 0, 0;
  CHECK(path_score(e, {Label::O}, crf) == doctest::Approx(0.5));

  Mat e3 = Mat::Zero(3, 3);
  CHECK(path_score(e3, {Label::B, Label::I, Label::O}, crf) == 0.0);

  Rng rng(17);
  CrfParams r = random_crf(rng);
  Mat em = random_emissions(rng, 3);
  std::vector<Label> y{Label::B, Label::I, Label::O};
  double expect = r.start(1) + em(0, 1) + r.trans(1, 2) + em(1, 2) + r.trans(2, 0) + em(2, 0) +
                  r.end(0);
  CHECK(path_score(em, y, r) == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(path_score(em, {Label::O}, r), DataError);
  CHECK_THROWS_AS(path_score(em, {}, r), DataError);
}

TEST_CASE("log_partition: uniform cases hit ln 3 and ln 9") {
  CrfParams crf = zero_crf(1);
  CHECK(log_partition(Mat::Zero(1, 3), crf) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(log_partition(Mat::Zero(2, 3), crf) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
}

TEST_CASE("log_partition matches exhaustive enumeration within 1e-8 relative") {
  Rng rng(23);
  for (int trial = 0; trial < 60; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(5));
    CrfParams crf = random_crf(rng);
    Mat e = random_emissions(rng, n, trial % 3 == 0 ? 8.0 : 1.0);
    double got = log_partition(e, crf);
    double want = oracle_log_partition(e, crf);
    CHECK(std::abs(got - want) <= 1e-8 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("log_partition stays stable for scores near +-50") {
  CrfParams crf = zero_crf(1);
  Mat e(2, 3);
  e << 50, -50, 0, 50, -50, 0;
  double got = log_partition(e, crf);
  double want = oracle_log_partition(e, crf);
  CHECK(std::isfinite(got));
  CHECK(got == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("nll: uniform case, saturation, enumeration probability") {
  CrfParams crf = zero_crf(1);
  CHECK(nll(Mat::Zero(1, 3), {Label::O}, crf) == doctest::Approx(std::log(3.0)));

  Mat e = Mat::Zero(2, 3);
  e(0, 1) = 100.0;
  e(1, 2) = 100.0;
  CHECK(nll(e, {Label::B, Label::I}, crf) == doctest::Approx(0.0).epsilon(1e-9));

  Rng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(5));
    CrfParams r = random_crf(rng);
    Mat em = random_emissions(rng, n);
    std::vector<Label> gold;
    for (int i = 0; i < n; ++i) gold.push_back(static_cast<Label>(rng.uniform_int(3)));
    double p_gold = std::exp(oracle_score(em, gold, r) - oracle_log_partition(em, r));
    CHECK(nll(em, gold, r) == doctest::Approx(-std::log(p_gold)).epsilon(1e-8));
    CHECK(nll(em, gold, r) >= 0.0);
  }
}

TEST_CASE("viterbi: decoupled positions and the all-O tie") {
  CrfParams crf = zero_crf(1);
  Mat e(3, 3);
  e << 0, 5, 0, 0, 0, 5, 5, 0, 0;
  CHECK(viterbi(e, crf) == std::vector<Label>{Label::B, Label::I, Label::O});
  CHECK(viterbi(Mat::Zero(4, 3), crf) == std::vector<Label>{Label::O, Label::O, Label::O, Label::O});
}

TEST_CASE("viterbi matches enumeration, including exact ties") {
  Rng rng(31);
  int tie_runs = 0;
  for (int trial = 0; trial < 400; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(5));
    CrfParams crf = zero_crf(2);
    // gridded parameters make exact score ties frequent
    for (int a = 0; a < 3; ++a) {
      crf.start(a) = gridded(rng);
      crf.end(a) = gridded(rng);
      for (int b = 0; b < 3; ++b) crf.trans(a, b) = gridded(rng);
    }
    Mat e(n, 3);
    for (int i = 0; i < n; ++i) {
      for (int y = 0; y < 3; ++y) e(i, y) = gridded(rng);
    }

    std::vector<Label> got = viterbi(e, crf);
    std::vector<Label> want = oracle_viterbi(e, crf);
    CHECK(path_score(e, got, crf) == path_score(e, want, crf));
    CHECK(got == want);

    // count how often the optimum was actually tied, to keep the test honest
    int optima = 0;
    double best = path_score(e, want, crf);
    for (const auto& p : all_paths(n)) {
      if (oracle_score(e, p, crf) == best) ++optima;
    }
    if (optima > 1) ++tie_runs;
  }
  CHECK(tie_runs > 20);
}

TEST_CASE("constant emission shift: partition and scores shift by n*c, nll and argmax fixed") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(4));
    CrfParams crf = zero_crf(2);
    for (int a = 0; a < 3; ++a) {
      crf.start(a) = gridded(rng);
      crf.end(a) = gridded(rng);
      for (int b = 0; b < 3; ++b) crf.trans(a, b) = gridded(rng);
    }
    Mat e(n, 3);
    for (int i = 0; i < n; ++i) {
      for (int y = 0; y < 3; ++y) e(i, y) = gridded(rng);
    }
    std::vector<Label> gold;
    for (int i = 0; i < n; ++i) gold.push_back(static_cast<Label>(rng.uniform_int(3)));

    const double c = 0.75;
    Mat shifted = e.array() + c;
    CHECK(path_score(shifted, gold, crf) ==
          doctest::Approx(path_score(e, gold, crf) + n * c).epsilon(1e-12));
    CHECK(log_partition(shifted, crf) ==
          doctest::Approx(log_partition(e, crf) + n * c).epsilon(1e-12));
    CHECK(nll(shifted, gold, crf) == doctest::Approx(nll(e, gold, crf)).epsilon(1e-9));
    CHECK(viterbi(shifted, crf) == viterbi(e, crf));
  }
}

TEST_CASE("nll_backward matches finite differences to 1e-6 absolute") {
  Rng rng(41);
  const double eps = 1e-5;
  for (int trial = 0; trial < 12; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(4));
    CrfParams crf = random_crf(rng);
    Mat e = random_emissions(rng, n);
    std::vector<Label> gold;
    for (int i = 0; i < n; ++i) gold.push_back(static_cast<Label>(rng.uniform_int(3)));

    CrfParams grads = zero_crf(4);
    Mat d_e = nll_backward(e, gold, crf, &grads);

    for (int i = 0; i < n; ++i) {
      for (int y = 0; y < 3; ++y) {
        Mat ep = e, em = e;
        ep(i, y) += eps;
        em(i, y) -= eps;
        double numeric = (nll(ep, gold, crf) - nll(em, gold, crf)) / (2 * eps);
        CHECK(std::abs(d_e(i, y) - numeric) < 1e-6);
      }
    }
    for (int a = 0; a < 3; ++a) {
      {
        CrfParams cp = crf, cm = crf;
        cp.start(a) += eps;
        cm.start(a) -= eps;
        double numeric = (nll(e, gold, cp) - nll(e, gold, cm)) / (2 * eps);
        CHECK(std::abs(grads.start(a) - numeric) < 1e-6);
      }
      {
        CrfParams cp = crf, cm = crf;
        cp.end(a) += eps;
        cm.end(a) -= eps;
        double numeric = (nll(e, gold, cp) - nll(e, gold, cm)) / (2 * eps);
        CHECK(std::abs(grads.end(a) - numeric) < 1e-6);
      }
      for (int b = 0; b < 3; ++b) {
        CrfParams cp = crf, cm = crf;
        cp.trans(a, b) += eps;
        cm.trans(a, b) -= eps;
        double numeric = (nll(e, gold, cp) - nll(e, gold, cm)) / (2 * eps);
        CHECK(std::abs(grads.trans(a, b) - numeric) < 1e-6);
      }
    }

    // marginals minus one-hot: rows of d_e + one-hot(gold) sum to 1
    for (int i = 0; i < n; ++i) {
      double row = d_e.row(i).sum() + 1.0;
      CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("crf init: projection seeded, structure zeroed") {
  CrfParams a = init_crf(6, 7);
  CrfParams b = init_crf(6, 7);
  CHECK(a.proj_w == b.proj_w);
  CHECK(a.trans.isZero());
  CHECK(a.start.isZero());
  CHECK(a.end.isZero());
  CHECK(a.proj_b.isZero());
  CrfParams c = init_crf(6, 8);
  CHECK(a.proj_w != c.proj_w);
}

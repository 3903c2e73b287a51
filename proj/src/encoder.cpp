#include "slotmoco/encoder.hpp"

#include <cmath>

namespace slotmoco {

namespace {

constexpr double kLnEps = 1e-12;
constexpr double kSqrt2Pi = 2.506628274631000502415765284811;

Mat zeros(int rows, int cols) { return Mat::Zero(rows, cols); }

}  // namespace

EncoderParams zero_params(const EncoderConfig& config) {
  config.validate();
  EncoderParams p;
  p.config = config;
  int d = config.d_model;
  p.tok_emb = zeros(config.vocab_size, d);
  p.pos_emb = zeros(config.max_len, d);
  p.seg_emb = zeros(config.n_segments, d);
  p.emb_ln_gain = Vec::Zero(d);
  p.emb_ln_bias = Vec::Zero(d);
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (LayerParams& l : p.layers) {
    l.w_q = zeros(d, d);
    l.w_k = zeros(d, d);
    l.w_v = zeros(d, d);
    l.w_o = zeros(d, d);
    l.b_q = Vec::Zero(d);
    l.b_k = Vec::Zero(d);
    l.b_v = Vec::Zero(d);
    l.b_o = Vec::Zero(d);
    l.w_ff1 = zeros(d, config.d_ff);
    l.b_ff1 = Vec::Zero(config.d_ff);
    l.w_ff2 = zeros(config.d_ff, d);
    l.b_ff2 = Vec::Zero(d);
    l.ln1_gain = Vec::Zero(d);
    l.ln1_bias = Vec::Zero(d);
    l.ln2_gain = Vec::Zero(d);
    l.ln2_bias = Vec::Zero(d);
  }
  return p;
}

namespace {

void fill_normal(Mat& m, Rng& rng, double stddev) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      m(i, j) = rng.normal(0.0, stddev);
    }
  }
}

}  // namespace

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams p = zero_params(config);
  Rng rng = Rng::substream(seed, "init.encoder");
  const double scale = 0.02;
  fill_normal(p.tok_emb, rng, scale);
  fill_normal(p.pos_emb, rng, scale);
  fill_normal(p.seg_emb, rng, scale);
  p.emb_ln_gain.setOnes();
  for (LayerParams& l : p.layers) {
    fill_normal(l.w_q, rng, scale);
    fill_normal(l.w_k, rng, scale);
    fill_normal(l.w_v, rng, scale);
    fill_normal(l.w_o, rng, scale);
    fill_normal(l.w_ff1, rng, scale);
    fill_normal(l.w_ff2, rng, scale);
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
  }
  return p;
}

EncoderParams clone_params(const EncoderParams& params) { return params; }

std::vector<ParamRef> collect_params(EncoderParams& p, const std::string& prefix) {
  std::vector<ParamRef> refs;
  auto mat = [&](const std::string& name, Mat& m) {
    refs.push_back(ParamRef{prefix + name, m.data(), m.rows(), m.cols(), 2, true});
  };
  auto vec = [&](const std::string& name, Vec& v) {
    refs.push_back(ParamRef{prefix + name, v.data(), v.rows(), 1, 1, false});
  };
  mat("tok_emb", p.tok_emb);
  mat("pos_emb", p.pos_emb);
  mat("seg_emb", p.seg_emb);
  vec("emb_ln_gain", p.emb_ln_gain);
  vec("emb_ln_bias", p.emb_ln_bias);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    LayerParams& l = p.layers[i];
    std::string base = "layer" + std::to_string(i) + ".";
    mat(base + "w_q", l.w_q);
    vec(base + "b_q", l.b_q);
    mat(base + "w_k", l.w_k);
    vec(base + "b_k", l.b_k);
    mat(base + "w_v", l.w_v);
    vec(base + "b_v", l.b_v);
    mat(base + "w_o", l.w_o);
    vec(base + "b_o", l.b_o);
    mat(base + "w_ff1", l.w_ff1);
    vec(base + "b_ff1", l.b_ff1);
    mat(base + "w_ff2", l.w_ff2);
    vec(base + "b_ff2", l.b_ff2);
    vec(base + "ln1_gain", l.ln1_gain);
    vec(base + "ln1_bias", l.ln1_bias);
    vec(base + "ln2_gain", l.ln2_gain);
    vec(base + "ln2_bias", l.ln2_bias);
  }
  return refs;
}

namespace {

// y = gain .* (x - mean) / sqrt(var + eps) + bias, per row.
Mat layer_norm(const Mat& x, const Vec& gain, const Vec& bias, LnCache* cache) {
  Eigen::Index L = x.rows(), d = x.cols();
  Mat xhat(L, d);
  Vec rstd(L);
  for (Eigen::Index i = 0; i < L; ++i) {
    double mean = x.row(i).mean();
    double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(d);
    double r = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mean) * r;
    rstd(i) = r;
  }
  Mat y = (xhat.array().rowwise() * gain.transpose().array()).rowwise() + bias.transpose().array();
  if (cache) {
    cache->xhat = xhat;
    cache->rstd = rstd;
  }
  return y;
}

Mat layer_norm_backward(const Mat& dy, const LnCache& cache, const Vec& gain,
                        Vec& dgain, Vec& dbias) {
  Eigen::Index L = dy.rows(), d = dy.cols();
  dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix().transpose();
  dbias += dy.colwise().sum().transpose();
  Mat dxhat = dy.array().rowwise() * gain.transpose().array();
  Mat dx(L, d);
  for (Eigen::Index i = 0; i < L; ++i) {
    double m1 = dxhat.row(i).mean();
    double m2 = (dxhat.row(i).array() * cache.xhat.row(i).array()).mean();
    dx.row(i) = cache.rstd(i) * (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * std::exp(-0.5 * x * x) / kSqrt2Pi;
}

void softmax_rows(Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

// Inverted dropout mask: entries are 0 or 1/keep.
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  double keep = 1.0 - p;
  Mat mask(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      mask(i, j) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    }
  }
  return mask;
}

void validate_input(const EncoderParams& params, const EncodedQuery& input) {
  const EncoderConfig& cfg = params.config;
  Eigen::Index L = static_cast<Eigen::Index>(input.token_ids.size());
  if (L == 0) throw DataError("encoder input is empty");
  if (L > cfg.max_len) {
    throw DataError("encoder input length " + std::to_string(L) + " exceeds max_len " +
                    std::to_string(cfg.max_len));
  }
  if (input.segment_ids.size() != input.token_ids.size()) {
    throw DataError("encoder input: token/segment length mismatch");
  }
  for (int id : input.token_ids) {
    if (id < 0 || id >= cfg.vocab_size) throw DataError("encoder input: token id out of range");
  }
  for (int s : input.segment_ids) {
    if (s < 0 || s >= cfg.n_segments) throw DataError("encoder input: segment id out of range");
  }
  for (int pos : input.utterance_positions) {
    if (pos < 0 || pos >= static_cast<int>(L)) {
      throw DataError("encoder input: utterance position out of range");
    }
  }
}

}  // namespace

EncoderOutput encoder_forward(const EncoderParams& params, const EncodedQuery& input,
                              bool train_mode, Rng& dropout_rng, EncoderCache* cache) {
  validate_input(params, input);
  const EncoderConfig& cfg = params.config;
  const Eigen::Index L = static_cast<Eigen::Index>(input.token_ids.size());
  const int d = cfg.d_model;
  const int nh = cfg.n_heads;
  const int dh = d / nh;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool use_dropout = train_mode && cfg.dropout_prob > 0.0;

  if (cache) {
    cache->token_ids = input.token_ids;
    cache->segment_ids = input.segment_ids;
    cache->layers.clear();
    cache->layers.resize(static_cast<std::size_t>(cfg.n_layers));
  }

  Mat x(L, d);
  for (Eigen::Index i = 0; i < L; ++i) {
    x.row(i) = params.tok_emb.row(input.token_ids[static_cast<std::size_t>(i)]) +
               params.pos_emb.row(i) +
               params.seg_emb.row(input.segment_ids[static_cast<std::size_t>(i)]);
  }
  x = layer_norm(x, params.emb_ln_gain, params.emb_ln_bias, cache ? &cache->ln0 : nullptr);
  if (use_dropout) {
    Mat mask = dropout_mask(L, d, cfg.dropout_prob, dropout_rng);
    x = x.cwiseProduct(mask);
    if (cache) cache->emb_mask = std::move(mask);
  }

  for (int li = 0; li < cfg.n_layers; ++li) {
    const LayerParams& l = params.layers[static_cast<std::size_t>(li)];
    LayerCache* lc = cache ? &cache->layers[static_cast<std::size_t>(li)] : nullptr;
    if (lc) lc->x_in = x;

    Mat q = (x * l.w_q).rowwise() + l.b_q.transpose();
    Mat k = (x * l.w_k).rowwise() + l.b_k.transpose();
    Mat v = (x * l.w_v).rowwise() + l.b_v.transpose();
    if (lc) {
      lc->q = q;
      lc->k = k;
      lc->v = v;
      lc->attn_probs.resize(static_cast<std::size_t>(nh));
      if (use_dropout) lc->attn_prob_masks.resize(static_cast<std::size_t>(nh));
    }

    Mat context(L, d);
    for (int h = 0; h < nh; ++h) {
      auto qh = q.middleCols(h * dh, dh);
      auto kh = k.middleCols(h * dh, dh);
      auto vh = v.middleCols(h * dh, dh);
      Mat probs = qh * kh.transpose() * inv_sqrt_dh;
      softmax_rows(probs);
      if (lc) lc->attn_probs[static_cast<std::size_t>(h)] = probs;
      if (use_dropout) {
        Mat mask = dropout_mask(L, L, cfg.dropout_prob, dropout_rng);
        probs = probs.cwiseProduct(mask);
        if (lc) lc->attn_prob_masks[static_cast<std::size_t>(h)] = std::move(mask);
      }
      context.middleCols(h * dh, dh) = probs * vh;
    }
    if (lc) lc->context = context;

    Mat attn = (context * l.w_o).rowwise() + l.b_o.transpose();
    if (use_dropout) {
      Mat mask = dropout_mask(L, d, cfg.dropout_prob, dropout_rng);
      attn = attn.cwiseProduct(mask);
      if (lc) lc->attn_out_mask = std::move(mask);
    }
    Mat resid1 = x + attn;
    if (lc) lc->resid1 = resid1;
    Mat y1 = layer_norm(resid1, l.ln1_gain, l.ln1_bias, lc ? &lc->ln1 : nullptr);
    if (lc) lc->y1 = y1;

    Mat ff_pre = (y1 * l.w_ff1).rowwise() + l.b_ff1.transpose();
    if (lc) lc->ff_pre = ff_pre;
    Mat ff_act = ff_pre.unaryExpr([](double t) { return gelu(t); });
    if (lc) lc->ff_act = ff_act;
    Mat ff_out = (ff_act * l.w_ff2).rowwise() + l.b_ff2.transpose();
    if (use_dropout) {
      Mat mask = dropout_mask(L, d, cfg.dropout_prob, dropout_rng);
      ff_out = ff_out.cwiseProduct(mask);
      if (lc) lc->ff_out_mask = std::move(mask);
    }
    Mat resid2 = y1 + ff_out;
    if (lc) lc->resid2 = resid2;
    x = layer_norm(resid2, l.ln2_gain, l.ln2_bias, lc ? &lc->ln2 : nullptr);
  }

  EncoderOutput out;
  out.all_hidden = std::move(x);
  out.H.resize(static_cast<Eigen::Index>(input.utterance_positions.size()), d);
  for (std::size_t i = 0; i < input.utterance_positions.size(); ++i) {
    out.H.row(static_cast<Eigen::Index>(i)) = out.all_hidden.row(input.utterance_positions[i]);
  }
  out.h_cls = out.all_hidden.row(0).transpose();
  return out;
}

EncoderOutput encoder_forward(const EncoderParams& params, const EncodedQuery& input) {
  Rng unused(0);
  return encoder_forward(params, input, false, unused, nullptr);
}

void encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                      const Mat& d_all_hidden, EncoderParams& grads) {
  const EncoderConfig& cfg = params.config;
  const Eigen::Index L = static_cast<Eigen::Index>(cache.token_ids.size());
  const int d = cfg.d_model;
  const int nh = cfg.n_heads;
  const int dh = d / nh;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dx = d_all_hidden;
  for (int li = cfg.n_layers - 1; li >= 0; --li) {
    const LayerParams& l = params.layers[static_cast<std::size_t>(li)];
    LayerParams& gl = grads.layers[static_cast<std::size_t>(li)];
    const LayerCache& lc = cache.layers[static_cast<std::size_t>(li)];

    // LN2: resid2 -> x_out
    Mat dresid2 = layer_norm_backward(dx, lc.ln2, l.ln2_gain, gl.ln2_gain, gl.ln2_bias);

    // resid2 = y1 + dropout(ff_out)
    Mat dy1 = dresid2;
    Mat dff_out = lc.ff_out_mask.size() ? dresid2.cwiseProduct(lc.ff_out_mask).eval() : dresid2;

    // ff_out = ff_act * w_ff2 + b_ff2
    gl.w_ff2.noalias() += lc.ff_act.transpose() * dff_out;
    gl.b_ff2 += dff_out.colwise().sum().transpose();
    Mat dff_act = dff_out * l.w_ff2.transpose();

    // ff_act = gelu(ff_pre)
    Mat dff_pre = dff_act.cwiseProduct(lc.ff_pre.unaryExpr([](double t) { return gelu_grad(t); }));

    // ff_pre = y1 * w_ff1 + b_ff1
    gl.w_ff1.noalias() += lc.y1.transpose() * dff_pre;
    gl.b_ff1 += dff_pre.colwise().sum().transpose();
    dy1.noalias() += dff_pre * l.w_ff1.transpose();

    // LN1: resid1 -> y1
    Mat dresid1 = layer_norm_backward(dy1, lc.ln1, l.ln1_gain, gl.ln1_gain, gl.ln1_bias);

    // resid1 = x_in + dropout(attn)
    Mat dx_in = dresid1;
    Mat dattn = lc.attn_out_mask.size() ? dresid1.cwiseProduct(lc.attn_out_mask).eval() : dresid1;

    // attn = context * w_o + b_o
    gl.w_o.noalias() += lc.context.transpose() * dattn;
    gl.b_o += dattn.colwise().sum().transpose();
    Mat dcontext = dattn * l.w_o.transpose();

    Mat dq = Mat::Zero(L, d), dk = Mat::Zero(L, d), dv = Mat::Zero(L, d);
    for (int h = 0; h < nh; ++h) {
      auto qh = lc.q.middleCols(h * dh, dh);
      auto kh = lc.k.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      const Mat& probs = lc.attn_probs[static_cast<std::size_t>(h)];
      const Mat* mask = lc.attn_prob_masks.empty() ? nullptr : &lc.attn_prob_masks[static_cast<std::size_t>(h)];
      Mat probs_dropped = mask ? probs.cwiseProduct(*mask).eval() : probs;

      auto dctx_h = dcontext.middleCols(h * dh, dh);
      Mat dprobs = dctx_h * vh.transpose();
      dv.middleCols(h * dh, dh).noalias() += probs_dropped.transpose() * dctx_h;
      if (mask) dprobs = dprobs.cwiseProduct(*mask);

      // softmax backward, per row
      Mat dscores(L, L);
      for (Eigen::Index i = 0; i < L; ++i) {
        double dot = dprobs.row(i).dot(probs.row(i));
        dscores.row(i) = probs.row(i).array() * (dprobs.row(i).array() - dot);
      }
      dscores *= inv_sqrt_dh;
      dq.middleCols(h * dh, dh).noalias() += dscores * kh;
      dk.middleCols(h * dh, dh).noalias() += dscores.transpose() * qh;
    }

    gl.w_q.noalias() += lc.x_in.transpose() * dq;
    gl.b_q += dq.colwise().sum().transpose();
    gl.w_k.noalias() += lc.x_in.transpose() * dk;
    gl.b_k += dk.colwise().sum().transpose();
    gl.w_v.noalias() += lc.x_in.transpose() * dv;
    gl.b_v += dv.colwise().sum().transpose();
    dx_in.noalias() += dq * l.w_q.transpose();
    dx_in.noalias() += dk * l.w_k.transpose();
    dx_in.noalias() += dv * l.w_v.transpose();
    dx = std::move(dx_in);
  }

  if (cache.emb_mask.size()) dx = dx.cwiseProduct(cache.emb_mask);
  Mat demb = layer_norm_backward(dx, cache.ln0, params.emb_ln_gain, grads.emb_ln_gain, grads.emb_ln_bias);
  for (Eigen::Index i = 0; i < L; ++i) {
    grads.tok_emb.row(cache.token_ids[static_cast<std::size_t>(i)]) += demb.row(i);
    grads.pos_emb.row(i) += demb.row(i);
    grads.seg_emb.row(cache.segment_ids[static_cast<std::size_t>(i)]) += demb.row(i);
  }
}

void save_weights(const EncoderParams& params, const std::string& path) {
  auto& mutable_params = const_cast<EncoderParams&>(params);
  std::vector<NamedArray> arrays;
  for (const ParamRef& ref : collect_params(mutable_params)) {
    arrays.push_back(to_named_array(ref));
  }
  write_weights_file(path, params.config, arrays);
}

EncoderParams load_weights(const std::string& path) {
  WeightsFile wf = read_weights_file(path);
  EncoderParams params = zero_params(wf.config);
  for (const ParamRef& ref : collect_params(params)) {
    load_into(wf.get(ref.name), ref);
  }
  return params;
}

EncoderParams load_weights(const std::string& path, const EncoderConfig& expected) {
  WeightsFile wf = read_weights_file(path);
  if (!(wf.config == expected)) {
    throw DataError(path + ": header config mismatch with requested config");
  }
  EncoderParams params = zero_params(wf.config);
  for (const ParamRef& ref : collect_params(params)) {
    load_into(wf.get(ref.name), ref);
  }
  return params;
}

}  // namespace slotmoco

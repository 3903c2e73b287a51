#include "slotmoco/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slotmoco {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DataError("lambda must be in [0, 1]");
  if (!(lr > 0.0)) throw DataError("lr must be positive");
  if (warmup_steps < 0 || max_steps < 0) throw DataError("negative step counts");
  if (warmup_steps > max_steps) throw DataError("warmup_steps must be <= max_steps");
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  if (!(tau > 0.0)) throw DataError("tau must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DataError("momentum must be in [0, 1)");
  if (M < 2) throw DataError("contrastive set size M must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DataError("dropout must be in [0, 1)");
  if (weight_decay < 0.0) throw DataError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw DataError("betas must be in [0, 1)");
  }
  if (eval_interval < 1) throw DataError("eval_interval must be >= 1");
}

ModelState init_model(const EncoderConfig& cfg, std::uint64_t seed, double momentum) {
  ModelState state;
  state.query = init_encoder(cfg, seed);
  state.crf = init_crf(cfg.d_model, seed);
  state.key.params = clone_params(state.query);
  state.key.momentum = momentum;
  return state;
}

std::vector<ParamRef> trainable_params(ModelState& state) {
  std::vector<ParamRef> refs = collect_params(state.query);
  for (ParamRef& r : collect_crf_params(state.crf)) refs.push_back(r);
  return refs;
}

OptimizerState init_optimizer(const std::vector<ParamRef>& refs) {
  OptimizerState opt;
  opt.m.reserve(refs.size());
  opt.v.reserve(refs.size());
  for (const ParamRef& r : refs) {
    opt.m.push_back(Vec::Zero(r.size()));
    opt.v.push_back(Vec::Zero(r.size()));
  }
  return opt;
}

double combined_loss(double l_cl, double l_bio, double lambda) {
  return lambda * l_cl + (1.0 - lambda) * l_bio;
}

double lr_at(std::int64_t step, const TrainConfig& cfg) {
  if (step <= 0) return cfg.warmup_steps > 0 ? 0.0 : cfg.lr;
  if (step >= cfg.max_steps) return 0.0;
  if (step <= cfg.warmup_steps) {
    return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  return cfg.lr * static_cast<double>(cfg.max_steps - step) /
         static_cast<double>(cfg.max_steps - cfg.warmup_steps);
}

void adamw_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                OptimizerState& opt, double lr, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != opt.m.size()) {
    throw DataError("adamw: tensor count mismatch");
  }
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double eps = 1e-8;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) {
      throw DataError("adamw: shape mismatch for " + params[i].name);
    }
    double* p = params[i].data;
    const double* g = grads[i].data;
    Vec& m = opt.m[i];
    Vec& v = opt.v[i];
    const double wd = params[i].decay ? cfg.weight_decay : 0.0;
    for (std::int64_t j = 0; j < params[i].size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw NumericError("non-finite gradient in " + params[i].name + " at flat index " +
                           std::to_string(j));
      }
      m(j) = cfg.beta1 * m(j) + (1.0 - cfg.beta1) * g[j];
      v(j) = cfg.beta2 * v(j) + (1.0 - cfg.beta2) * g[j] * g[j];
      double mhat = m(j) / bc1;
      double vhat = v(j) / bc2;
      p[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[j]);
    }
  }
}

LossGrads compute_loss_and_grads(ModelState& state,
                                 const std::vector<QueryInstance>& batch,
                                 const std::vector<std::optional<ContrastiveSet>>& sets,
                                 const TrainConfig& cfg, const Vocab& vocab, bool train_mode,
                                 Rng& dropout_rng, bool with_grads) {
  if (batch.empty()) throw DataError("empty batch");
  if (sets.size() != batch.size()) throw DataError("sets/batch size mismatch");
  const EncoderConfig& enc_cfg = state.query.config;
  const double B = static_cast<double>(batch.size());

  std::size_t n_sets = 0;
  for (const auto& s : sets) n_sets += s.has_value() ? 1 : 0;
  std::size_t n_covered = 0;
  for (const QueryInstance& q : batch) n_covered += has_queried_span(q) ? 1 : 0;

  LossGrads out;
  out.coverage = static_cast<double>(n_covered) / B;
  if (with_grads) {
    out.enc_grads = zero_params(enc_cfg);
    out.crf_grads = zero_crf(enc_cfg.d_model);
  }
  CrfParams crf_raw = zero_crf(enc_cfg.d_model);  // bio-path CRF grads before scaling

  const double bio_w = (1.0 - cfg.lambda) / B;
  const double cl_w = n_sets == 0 ? 0.0 : cfg.lambda / static_cast<double>(n_sets);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const QueryInstance& anchor = batch[i];
    EncodedQuery input = sets[i]
                             ? sets[i]->anchor
                             : encode_query(vocab, anchor.slot_type, anchor.utterance->words,
                                            enc_cfg.max_len);

    EncoderCache cache;
    EncoderOutput fwd = encoder_forward(state.query, input, train_mode, dropout_rng,
                                        with_grads ? &cache : nullptr);

    // tagging path
    Mat e = emissions(state.crf, fwd.H);
    out.loss_bio += nll(e, anchor.labels, state.crf) / B;

    Mat d_hidden;
    if (with_grads) {
      d_hidden = Mat::Zero(fwd.all_hidden.rows(), fwd.all_hidden.cols());
      Mat d_e = nll_backward(e, anchor.labels, state.crf, &crf_raw);
      crf_raw.proj_w.noalias() += fwd.H.transpose() * d_e;
      crf_raw.proj_b += d_e.colwise().sum().transpose();
      Mat d_H = d_e * state.crf.proj_w.transpose();
      for (std::size_t p = 0; p < input.utterance_positions.size(); ++p) {
        d_hidden.row(input.utterance_positions[p]) += bio_w * d_H.row(static_cast<Eigen::Index>(p));
      }
    }

    // contrastive path
    if (sets[i]) {
      const ContrastiveSet& set = *sets[i];
      double norm = fwd.h_cls.norm();
      if (!(norm > 1e-12)) throw NumericError("query representation has (near-)zero norm");
      Vec q = fwd.h_cls / norm;

      std::vector<Vec> keys;
      keys.reserve(1 + set.negatives.size());
      keys.push_back(represent(state.key.params, set.positive.encoded));
      for (const KeySample& k : set.negatives) {
        keys.push_back(represent(state.key.params, k.encoded));
      }

      Vec d_q;
      double l_cl = info_nce_backward(q, keys, 0, cfg.tau, d_q);
      out.loss_cl += l_cl / static_cast<double>(n_sets);

      if (with_grads) {
        // through q = h / ||h||:  dh = (dq - q (q . dq)) / ||h||
        Vec d_h = (d_q - q * q.dot(d_q)) / norm;
        d_hidden.row(0) += cl_w * d_h.transpose();
      }
    }

    if (with_grads) encoder_backward(state.query, cache, d_hidden, out.enc_grads);
  }

  if (with_grads) {
    out.crf_grads.proj_w = bio_w * crf_raw.proj_w;
    out.crf_grads.proj_b = bio_w * crf_raw.proj_b;
    out.crf_grads.trans = bio_w * crf_raw.trans;
    out.crf_grads.start = bio_w * crf_raw.start;
    out.crf_grads.end = bio_w * crf_raw.end;
  }

  out.loss_total = combined_loss(out.loss_cl, out.loss_bio, cfg.lambda);
  if (!std::isfinite(out.loss_total)) throw NumericError("non-finite loss");
  return out;
}

StepMetrics train_step(const std::vector<QueryInstance>& batch, ModelState& state,
                       OptimizerState& opt, const TrainConfig& cfg, const TrainContext& ctx,
                       Rng& sampler_rng, Rng& dropout_rng) {
  if (batch.empty()) throw DataError("empty batch");

  // (1) contrastive sets; lambda = 0 builds none and draws nothing
  std::vector<std::optional<ContrastiveSet>> sets(batch.size());
  if (cfg.lambda > 0.0) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (has_queried_span(batch[i])) {
        sets[i] = make_contrastive_set(cfg.strategy, batch[i], ctx.all_slot_types, *ctx.lexicon,
                                       cfg.M, *ctx.vocab, state.query.config.max_len, sampler_rng);
      }
    }
  }

  // (2)-(4) losses and gradients over the query path
  LossGrads lg = compute_loss_and_grads(state, batch, sets, cfg, *ctx.vocab, true, dropout_rng,
                                        !cfg.skip_optimizer);

  // (5) optimizer
  double lr = lr_at(opt.step + 1, cfg);
  if (cfg.skip_optimizer) {
    ++opt.step;
  } else {
    std::vector<ParamRef> params = trainable_params(state);
    ModelState grads_holder;  // reuse collect order for gradient tensors
    grads_holder.query = std::move(lg.enc_grads);
    grads_holder.crf = std::move(lg.crf_grads);
    std::vector<ParamRef> grads = collect_params(grads_holder.query);
    for (ParamRef& r : collect_crf_params(grads_holder.crf)) grads.push_back(r);
    adamw_step(params, grads, opt, lr, cfg);
  }

  // (6) momentum update, after the optimizer step
  momentum_update(state.key, state.query);

  StepMetrics m;
  m.step = opt.step;
  m.loss_total = lg.loss_total;
  m.loss_bio = lg.loss_bio;
  m.loss_cl = lg.loss_cl;
  m.lr = lr;
  m.coverage = lg.coverage;
  return m;
}

double grad_check(ModelState& state, const std::vector<QueryInstance>& batch,
                  const TrainConfig& cfg, const TrainContext& ctx, double epsilon,
                  bool corrupt) {
  if (batch.empty()) throw DataError("grad_check: empty batch");

  // fixed contrastive sets, drawn once
  Rng set_rng = Rng::substream(cfg.seed, "gradcheck.sets");
  std::vector<std::optional<ContrastiveSet>> sets(batch.size());
  if (cfg.lambda > 0.0) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (has_queried_span(batch[i])) {
        sets[i] = make_contrastive_set(cfg.strategy, batch[i], ctx.all_slot_types, *ctx.lexicon,
                                       cfg.M, *ctx.vocab, state.query.config.max_len, set_rng);
      }
    }
  }

  Rng no_dropout(0);
  LossGrads lg =
      compute_loss_and_grads(state, batch, sets, cfg, *ctx.vocab, false, no_dropout, true);

  ModelState grads_holder;
  grads_holder.query = std::move(lg.enc_grads);
  grads_holder.crf = std::move(lg.crf_grads);
  std::vector<ParamRef> grads = collect_params(grads_holder.query);
  for (ParamRef& r : collect_crf_params(grads_holder.crf)) grads.push_back(r);
  if (corrupt) {
    for (ParamRef& g : grads) {
      for (std::int64_t j = 0; j < g.size(); ++j) g.data[j] = g.data[j] * 1.01 + 1e-3;
    }
  }

  std::vector<ParamRef> params = trainable_params(state);

  // used embedding rows: finite differences on untouched rows are pure noise
  std::set<int> used_tokens, used_positions, used_segments;
  auto note_input = [&](const EncodedQuery& q) {
    for (int id : q.token_ids) used_tokens.insert(id);
    for (int s : q.segment_ids) used_segments.insert(s);
    for (int p = 0; p < static_cast<int>(q.token_ids.size()); ++p) used_positions.insert(p);
  };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    note_input(sets[i] ? sets[i]->anchor
                       : encode_query(*ctx.vocab, batch[i].slot_type, batch[i].utterance->words,
                                      state.query.config.max_len));
  }

  auto coord_ok = [&](const ParamRef& ref, std::int64_t flat) {
    std::int64_t row = flat % ref.rows;  // column-major
    if (ref.name == "enc.tok_emb") return used_tokens.count(static_cast<int>(row)) > 0;
    if (ref.name == "enc.pos_emb") return used_positions.count(static_cast<int>(row)) > 0;
    if (ref.name == "enc.seg_emb") return used_segments.count(static_cast<int>(row)) > 0;
    return true;
  };

  auto loss_at = [&]() {
    Rng quiet(0);
    return compute_loss_and_grads(state, batch, sets, cfg, *ctx.vocab, false, quiet, false)
        .loss_total;
  };

  // >= 200 coordinates, every tensor sampled at least once
  Rng pick = Rng::substream(cfg.seed, "gradcheck.coords");
  std::vector<std::pair<std::size_t, std::int64_t>> coords;
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::int64_t flat = 0;
    for (int tries = 0; tries < 64 && !coord_ok(params[t], flat); ++tries) {
      flat = static_cast<std::int64_t>(pick.uniform_int(static_cast<std::uint64_t>(params[t].size())));
    }
    coords.emplace_back(t, flat);
  }
  while (coords.size() < 200) {
    std::size_t t = static_cast<std::size_t>(pick.uniform_int(params.size()));
    std::int64_t flat =
        static_cast<std::int64_t>(pick.uniform_int(static_cast<std::uint64_t>(params[t].size())));
    if (coord_ok(params[t], flat)) coords.emplace_back(t, flat);
  }

  double worst = 0.0;
  for (const auto& [t, flat] : coords) {
    double saved = params[t].data[flat];
    params[t].data[flat] = saved + epsilon;
    double fp = loss_at();
    params[t].data[flat] = saved - epsilon;
    double fm = loss_at();
    params[t].data[flat] = saved;
    double numeric = (fp - fm) / (2.0 * epsilon);
    double analytic = grads[t].data[flat];
    double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  }
  return worst;
}

std::vector<QueryInstance> expand_corpus_queries(const Corpus& corpus) {
  std::vector<QueryInstance> out;
  for (const std::string& domain : corpus.domains()) {
    auto it = corpus.domain_slot_types().find(domain);
    if (it == corpus.domain_slot_types().end() || it->second.empty()) continue;
    for (const Utterance& utt : corpus.samples(domain)) {
      for (QueryInstance& q : expand_queries(utt, it->second)) {
        out.push_back(std::move(q));
      }
    }
  }
  return out;
}

namespace {

void metrics_row(std::ostringstream& csv, const StepMetrics& m, const std::string& dev_f1) {
  csv << m.step << ',' << fmt_double(m.loss_total) << ',' << fmt_double(m.loss_bio) << ','
      << fmt_double(m.loss_cl) << ',' << fmt_double(m.lr) << ',' << fmt_double(m.coverage) << ','
      << dev_f1 << '\n';
}

}  // namespace

TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus,
                  const EncoderConfig& enc_cfg, const TrainConfig& cfg, const Vocab& vocab) {
  EncoderConfig model_cfg = enc_cfg;
  model_cfg.dropout_prob = cfg.dropout;  // the train config owns the dropout rate
  model_cfg.validate();
  cfg.validate();
  if (train_corpus.empty()) throw DataError("train split is empty");
  if (dev_corpus.empty() && cfg.max_steps > 0) throw DataError("dev split is empty");

  std::vector<QueryInstance> instances = expand_corpus_queries(train_corpus);
  if (instances.empty() && cfg.max_steps > 0) {
    throw DataError("train split has no slot types to query");
  }

  TrainContext ctx;
  ctx.vocab = &vocab;
  ctx.all_slot_types = train_corpus.all_slot_types();
  ctx.lexicon = &train_corpus.lexicon();

  ModelState state = init_model(model_cfg, cfg.seed, cfg.momentum);
  OptimizerState opt = init_optimizer(trainable_params(state));

  Rng data_rng = Rng::substream(cfg.seed, "data");
  Rng sampler_rng = Rng::substream(cfg.seed, "sampler");
  Rng dropout_rng = Rng::substream(cfg.seed, "dropout");

  std::ostringstream csv;
  csv << "step,loss_total,loss_bio,loss_cl,lr,coverage,dev_f1\n";

  TrainResult result;
  result.best = state;  // max_steps = 0 returns the initial model

  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();  // trigger shuffle on first use

  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<QueryInstance> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        data_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(instances[order[cursor++]]);
    }

    StepMetrics m = train_step(batch, state, opt, cfg, ctx, sampler_rng, dropout_rng);

    std::string dev_cell;
    if (step % cfg.eval_interval == 0 || step == cfg.max_steps) {
      Predictor predictor = make_crf_predictor(state.query, state.crf, vocab);
      F1Report report = evaluate(predictor, dev_corpus, dev_corpus.domain_slot_types());
      double f1 = report.average.f1;
      dev_cell = fmt_double(f1);
      if (f1 > result.best_dev_f1) {
        result.best_dev_f1 = f1;
        result.best_step = step;
        result.best = state;  // deep copy
      }
    }
    metrics_row(csv, m, dev_cell);
  }

  result.metrics_csv = csv.str();
  return result;
}

namespace {

constexpr const char* kMomentumArray = "key.momentum";
constexpr const char* kOptStepArray = "opt.step";

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state, const OptimizerState* opt) {
  auto& mut = const_cast<ModelState&>(state);
  std::vector<NamedArray> arrays;
  for (const ParamRef& r : collect_params(mut.query, "enc.")) arrays.push_back(to_named_array(r));
  for (const ParamRef& r : collect_params(mut.key.params, "key.")) {
    arrays.push_back(to_named_array(r));
  }
  for (const ParamRef& r : collect_crf_params(mut.crf, "crf.")) arrays.push_back(to_named_array(r));
  arrays.push_back(NamedArray{kMomentumArray, {1}, {state.key.momentum}});
  if (opt) {
    arrays.push_back(NamedArray{kOptStepArray, {1}, {static_cast<double>(opt->step)}});
    std::vector<ParamRef> order = trainable_params(mut);
    for (std::size_t i = 0; i < order.size(); ++i) {
      NamedArray m{"opt.m." + order[i].name, {opt->m[i].size()}, {}};
      m.data.assign(opt->m[i].data(), opt->m[i].data() + opt->m[i].size());
      arrays.push_back(std::move(m));
      NamedArray v{"opt.v." + order[i].name, {opt->v[i].size()}, {}};
      v.data.assign(opt->v[i].data(), opt->v[i].data() + opt->v[i].size());
      arrays.push_back(std::move(v));
    }
  }
  write_weights_file(path, state.query.config, arrays);
}

Checkpoint load_checkpoint(const std::string& path) {
  WeightsFile wf = read_weights_file(path);
  Checkpoint ck;
  ck.state.query = zero_params(wf.config);
  ck.state.key.params = zero_params(wf.config);
  ck.state.crf = zero_crf(wf.config.d_model);
  for (const ParamRef& r : collect_params(ck.state.query, "enc.")) load_into(wf.get(r.name), r);
  for (const ParamRef& r : collect_params(ck.state.key.params, "key.")) {
    load_into(wf.get(r.name), r);
  }
  for (const ParamRef& r : collect_crf_params(ck.state.crf, "crf.")) load_into(wf.get(r.name), r);
  ck.state.key.momentum = wf.get(kMomentumArray).data.at(0);

  if (wf.find(kOptStepArray)) {
    ck.has_opt = true;
    ck.opt.step = static_cast<std::int64_t>(wf.get(kOptStepArray).data.at(0));
    for (const ParamRef& r : trainable_params(ck.state)) {
      const NamedArray& m = wf.get("opt.m." + r.name);
      const NamedArray& v = wf.get("opt.v." + r.name);
      if (static_cast<std::int64_t>(m.data.size()) != r.size() ||
          static_cast<std::int64_t>(v.data.size()) != r.size()) {
        throw DataError(path + ": optimizer state shape mismatch for " + r.name);
      }
      ck.opt.m.push_back(Eigen::Map<const Vec>(m.data.data(), r.size()));
      ck.opt.v.push_back(Eigen::Map<const Vec>(v.data.data(), r.size()));
    }
  }
  return ck;
}

}  // namespace slotmoco

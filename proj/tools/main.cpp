#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <climits>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "slotmoco/contrast.hpp"
#include "slotmoco/corpus.hpp"
#include "slotmoco/eval.hpp"
#include "slotmoco/tokenizer.hpp"
#include "slotmoco/trainer.hpp"

namespace fs = std::filesystem;
using namespace slotmoco;

namespace {

// ---------------------------------------------------------------------------
// Run configuration: defaults, then config-file keys, then flags.

struct RunConfig {
  std::string corpus;
  std::string vocab;
  std::string weights;
  std::string out_dir = "run";
  std::string target_domain;
  int few_shot = 0;
  int dev_size = 500;
  int min_freq = 1;
  int n_seeds = 3;  // ablation sweep width
  EncoderConfig enc;
  TrainConfig train;
};

long long parse_ll(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw DataError("config key " + key + ": not an integer: \"" + v + "\"");
  }
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  long long ll = parse_ll(key, v);
  if (ll < INT_MIN || ll > INT_MAX) throw DataError("config key " + key + ": out of range: " + v);
  return static_cast<int>(ll);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw DataError("config key " + key + ": not an unsigned integer: \"" + v + "\"");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw DataError("config key " + key + ": not a number: \"" + v + "\"");
  }
  return out;
}

void apply_config(RunConfig& rc, const ConfigMap& cfg) {
  for (const auto& [key, value] : cfg) {
    if (key == "corpus") rc.corpus = value;
    else if (key == "vocab") rc.vocab = value;
    else if (key == "weights") rc.weights = value;
    else if (key == "out_dir") rc.out_dir = value;
    else if (key == "target_domain") rc.target_domain = value;
    else if (key == "few_shot") rc.few_shot = parse_int(key, value);
    else if (key == "dev_size") rc.dev_size = parse_int(key, value);
    else if (key == "min_freq") rc.min_freq = parse_int(key, value);
    else if (key == "seeds") rc.n_seeds = parse_int(key, value);
    else if (key == "d_model") rc.enc.d_model = parse_int(key, value);
    else if (key == "n_layers") rc.enc.n_layers = parse_int(key, value);
    else if (key == "n_heads") rc.enc.n_heads = parse_int(key, value);
    else if (key == "d_ff") rc.enc.d_ff = parse_int(key, value);
    else if (key == "max_len") rc.enc.max_len = parse_int(key, value);
    else if (key == "lambda") rc.train.lambda = parse_double(key, value);
    else if (key == "lr") rc.train.lr = parse_double(key, value);
    else if (key == "warmup_steps") rc.train.warmup_steps = parse_ll(key, value);
    else if (key == "max_steps") rc.train.max_steps = parse_ll(key, value);
    else if (key == "batch_size") rc.train.batch_size = parse_int(key, value);
    else if (key == "tau") rc.train.tau = parse_double(key, value);
    else if (key == "momentum") rc.train.momentum = parse_double(key, value);
    else if (key == "M") rc.train.M = parse_int(key, value);
    else if (key == "strategy") rc.train.strategy = parse_strategy(value);
    else if (key == "dropout") rc.train.dropout = parse_double(key, value);
    else if (key == "weight_decay") rc.train.weight_decay = parse_double(key, value);
    else if (key == "beta1") rc.train.beta1 = parse_double(key, value);
    else if (key == "beta2") rc.train.beta2 = parse_double(key, value);
    else if (key == "eval_interval") rc.train.eval_interval = parse_ll(key, value);
    else if (key == "seed") rc.train.seed = parse_u64(key, value);
    else throw DataError("unknown config key \"" + key + "\"");
  }
}

ConfigMap to_config(const RunConfig& rc) {
  ConfigMap out;
  out["corpus"] = rc.corpus;
  out["vocab"] = rc.vocab;
  out["weights"] = rc.weights;
  out["out_dir"] = rc.out_dir;
  out["target_domain"] = rc.target_domain;
  out["few_shot"] = std::to_string(rc.few_shot);
  out["dev_size"] = std::to_string(rc.dev_size);
  out["min_freq"] = std::to_string(rc.min_freq);
  out["seeds"] = std::to_string(rc.n_seeds);
  out["d_model"] = std::to_string(rc.enc.d_model);
  out["n_layers"] = std::to_string(rc.enc.n_layers);
  out["n_heads"] = std::to_string(rc.enc.n_heads);
  out["d_ff"] = std::to_string(rc.enc.d_ff);
  out["max_len"] = std::to_string(rc.enc.max_len);
  out["lambda"] = fmt_double(rc.train.lambda);
  out["lr"] = fmt_double(rc.train.lr);
  out["warmup_steps"] = std::to_string(rc.train.warmup_steps);
  out["max_steps"] = std::to_string(rc.train.max_steps);
  out["batch_size"] = std::to_string(rc.train.batch_size);
  out["tau"] = fmt_double(rc.train.tau);
  out["momentum"] = fmt_double(rc.train.momentum);
  out["M"] = std::to_string(rc.train.M);
  out["strategy"] = strategy_name(rc.train.strategy);
  out["dropout"] = fmt_double(rc.train.dropout);
  out["weight_decay"] = fmt_double(rc.train.weight_decay);
  out["beta1"] = fmt_double(rc.train.beta1);
  out["beta2"] = fmt_double(rc.train.beta2);
  out["eval_interval"] = std::to_string(rc.train.eval_interval);
  out["seed"] = std::to_string(rc.train.seed);
  return out;
}

// Options shared by the run-config subcommands. Flags win over file keys.
struct CommonOpts {
  std::string config_path;
  std::map<std::string, std::string> raw;
  std::vector<std::pair<CLI::Option*, std::string>> bound;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config file (key = value lines)");
    auto opt = [&](const std::string& flag, const std::string& key, const std::string& desc) {
      bound.emplace_back(cmd->add_option(flag, raw[key], desc), key);
    };
    opt("--corpus", "corpus", "corpus file");
    opt("--vocab", "vocab", "vocab file (built from the corpus when absent)");
    opt("--weights", "weights", "checkpoint file");
    opt("--out-dir", "out_dir", "output directory");
    opt("--target-domain", "target_domain", "held-out domain for the leave-one-out split");
    opt("--few-shot", "few_shot", "target-domain samples moved into training");
    opt("--dev-size", "dev_size", "target-domain samples held out for model selection");
    opt("--min-freq", "min_freq", "vocabulary frequency cutoff");
    opt("--seeds", "seeds", "seeds per ablation cell");
    opt("--d-model", "d_model", "encoder width");
    opt("--n-layers", "n_layers", "encoder layers");
    opt("--n-heads", "n_heads", "attention heads");
    opt("--d-ff", "d_ff", "feed-forward width");
    opt("--max-len", "max_len", "maximum encoded length");
    opt("--lambda", "lambda", "contrastive weight in the combined loss");
    opt("--lr", "lr", "peak learning rate");
    opt("--warmup-steps", "warmup_steps", "linear warmup steps");
    opt("--max-steps", "max_steps", "total training steps");
    opt("--batch-size", "batch_size", "queries per step");
    opt("--tau", "tau", "contrastive temperature");
    opt("--momentum", "momentum", "key-encoder momentum");
    opt("--M,--set-size", "M", "contrastive set size");
    opt("--strategy", "strategy", "sampler: template, synthetic, random, or concat");
    opt("--dropout", "dropout", "dropout rate during training");
    opt("--weight-decay", "weight_decay", "decoupled weight decay");
    opt("--beta1", "beta1", "Adam beta1");
    opt("--beta2", "beta2", "Adam beta2");
    opt("--eval-interval", "eval_interval", "steps between dev evaluations");
    opt("--seed", "seed", "top-level seed (falls back to $SLOTMOCO_SEED)");
  }

  RunConfig resolve() const {
    RunConfig rc;
    ConfigMap file;
    if (!config_path.empty()) file = parse_config_file(config_path);
    ConfigMap flags;
    for (const auto& [option, key] : bound) {
      if (option->count() > 0) flags[key] = raw.at(key);
    }
    apply_config(rc, file);
    apply_config(rc, flags);
    if (!file.count("seed") && !flags.count("seed")) {
      if (const char* env = std::getenv("SLOTMOCO_SEED")) {
        rc.train.seed = parse_u64("SLOTMOCO_SEED", env);
      }
    }
    return rc;
  }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out) throw DataError("write failed: " + path);
}

Corpus require_corpus(const RunConfig& rc) {
  if (rc.corpus.empty()) throw DataError("corpus path required (corpus = <path> or --corpus)");
  return load_corpus(rc.corpus);
}

Vocab resolve_vocab(const RunConfig& rc, const Corpus& corpus) {
  if (!rc.vocab.empty()) return Vocab::load(rc.vocab);
  return Vocab::build(corpus, rc.min_freq);
}

void check_vocab_matches(const Vocab& vocab, const EncoderConfig& cfg) {
  if (vocab.size() != cfg.vocab_size) {
    throw DataError("vocab has " + std::to_string(vocab.size()) +
                    " tokens but the checkpoint was trained with " +
                    std::to_string(cfg.vocab_size));
  }
}

SplitResult make_split(const Corpus& corpus, const RunConfig& rc) {
  if (rc.target_domain.empty()) {
    // no held-out domain: train, select, and report on the whole corpus
    return SplitResult{corpus, corpus, corpus};
  }
  if (!corpus.has_domain(rc.target_domain)) {
    std::string known;
    for (const std::string& d : corpus.domains()) {
      if (!known.empty()) known += ", ";
      known += d;
    }
    throw DataError("unknown domain \"" + rc.target_domain + "\" (known: " + known + ")");
  }
  SplitSpec spec;
  spec.target_domain = rc.target_domain;
  spec.few_shot_k = rc.few_shot;
  spec.dev_size = rc.dev_size;
  spec.seed = rc.train.seed;
  return leave_one_out_split(corpus, spec);
}

std::string tag_of(Label l, const std::string& slot_type) {
  if (l == Label::B) return "B-" + slot_type;
  if (l == Label::I) return "I-" + slot_type;
  return "O";
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const std::string& config_path, const std::string& out_path,
                 std::uint64_t seed, int samples_override) {
  ConfigMap cfg = parse_config_file(config_path);
  if (samples_override > 0) cfg["samples_per_domain"] = std::to_string(samples_override);
  GeneratorConfig gen = parse_generator_config(cfg);
  Corpus corpus = generate_synthetic_corpus(gen, seed);
  save_corpus(corpus, out_path);

  std::cout << "wrote " << out_path << ": " << corpus.domains().size() << " domains, "
            << corpus.size() << " utterances (seed " << seed << ")\n";
  for (const std::string& domain : corpus.domains()) {
    std::cout << "  " << domain << ": " << corpus.samples(domain).size() << " samples, slots:";
    for (const std::string& t : corpus.slot_types_of(domain)) std::cout << ' ' << t;
    std::cout << '\n';
  }
  std::cout << "lexicon:";
  for (const auto& [type, phrases] : corpus.lexicon()) {
    std::cout << ' ' << type << '=' << phrases.size();
  }
  std::cout << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(RunConfig rc) {
  rc.train.validate();
  Corpus corpus = require_corpus(rc);
  SplitResult split = make_split(corpus, rc);
  Vocab vocab = resolve_vocab(rc, corpus);
  rc.enc.vocab_size = vocab.size();
  rc.enc.dropout_prob = rc.train.dropout;
  rc.enc.validate();

  fs::create_directories(rc.out_dir);
  std::cout << "train " << split.train.size() << " / dev " << split.dev.size() << " / test "
            << split.test.size() << " utterances, vocab " << vocab.size() << ", seed "
            << rc.train.seed << "\n";

  TrainResult result = train(split.train, split.dev, rc.enc, rc.train, vocab);

  std::string ckpt = rc.out_dir + "/checkpoint.bin";
  save_checkpoint(ckpt, result.best, nullptr);
  write_file(rc.out_dir + "/metrics.csv", result.metrics_csv);
  vocab.save(rc.out_dir + "/vocab.tsv");
  write_file(rc.out_dir + "/config.cfg", write_config_text(to_config(rc)));

  std::cout << "best dev F1 " << fmt_double(result.best_dev_f1) << " at step "
            << result.best_step << "\n"
            << "wrote " << ckpt << ", metrics.csv, vocab.tsv, config.cfg\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const RunConfig& rc) {
  if (rc.weights.empty()) throw DataError("checkpoint required (--weights)");
  Checkpoint ck = load_checkpoint(rc.weights);
  Corpus corpus = require_corpus(rc);
  Vocab vocab = resolve_vocab(rc, corpus);
  check_vocab_matches(vocab, ck.state.query.config);

  const Corpus* eval_corpus = &corpus;
  SplitResult split;
  if (!rc.target_domain.empty()) {
    split = make_split(corpus, rc);
    eval_corpus = &split.test;
  }

  Predictor predict = make_crf_predictor(ck.state.query, ck.state.crf, vocab);
  F1Report report = evaluate(predict, *eval_corpus, eval_corpus->domain_slot_types());
  std::cout << report_table(report);

  if (!rc.out_dir.empty()) {
    fs::create_directories(rc.out_dir);
    write_file(rc.out_dir + "/report.csv", report_csv(report));
    write_file(rc.out_dir + "/report.txt", report_table(report));
    std::cout << "wrote " << rc.out_dir << "/report.csv\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// predict

int cmd_predict(const RunConfig& rc, const std::string& slot_type, const std::string& out_path) {
  if (rc.weights.empty()) throw DataError("checkpoint required (--weights)");
  Checkpoint ck = load_checkpoint(rc.weights);
  Corpus corpus = require_corpus(rc);
  Vocab vocab = resolve_vocab(rc, corpus);
  check_vocab_matches(vocab, ck.state.query.config);

  Predictor predict = make_crf_predictor(ck.state.query, ck.state.crf, vocab);
  std::ostringstream out;
  bool first = true;
  for (const std::string& domain : corpus.domains()) {
    std::vector<std::string> types =
        slot_type.empty() ? corpus.slot_types_of(domain) : std::vector<std::string>{slot_type};
    for (const Utterance& utt : corpus.samples(domain)) {
      for (const std::string& t : types) {
        std::vector<Label> labels = predict(t, utt);
        if (!first) out << '\n';
        first = false;
        out << "# domain=" << domain << '\n';
        for (std::size_t i = 0; i < utt.words.size(); ++i) {
          out << utt.words[i] << '\t' << tag_of(labels[i], t) << '\n';
        }
      }
    }
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    write_file(out_path, out.str());
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

int cmd_ablate(const RunConfig& rc) {
  if (rc.target_domain.empty()) throw DataError("ablate needs a target_domain");
  if (rc.n_seeds < 1) throw DataError("seeds must be >= 1");
  Corpus corpus = require_corpus(rc);

  std::vector<double> lambdas{0.0};
  if (rc.train.lambda != 0.0) lambdas.push_back(rc.train.lambda);
  const std::vector<Strategy> strategies{Strategy::Template, Strategy::Synthetic, Strategy::Random,
                                         Strategy::Concat};

  fs::create_directories(rc.out_dir + "/cells");
  std::vector<std::string> rows;

  auto run_cell = [&](double lambda, const std::string& strat_label, Strategy strategy,
                      std::uint64_t seed) {
    std::string file_label = strat_label;
    std::replace(file_label.begin(), file_label.end(), '/', '-');
    std::string cell = "l" + fmt_double(lambda) + "_" + file_label + "_s" + std::to_string(seed);
    std::string row_path = rc.out_dir + "/cells/" + cell + ".row";
    if (fs::exists(row_path)) {
      std::ifstream in(row_path);
      std::string row;
      std::getline(in, row);
      if (!row.empty()) {
        std::cout << "cell " << cell << ": reused\n";
        rows.push_back(row);
        return;
      }
    }
    RunConfig cell_rc = rc;
    cell_rc.train.lambda = lambda;
    cell_rc.train.strategy = strategy;
    cell_rc.train.seed = seed;
    SplitResult split = make_split(corpus, cell_rc);
    Vocab vocab = resolve_vocab(cell_rc, corpus);
    cell_rc.enc.vocab_size = vocab.size();
    cell_rc.enc.dropout_prob = cell_rc.train.dropout;

    TrainResult result = train(split.train, split.dev, cell_rc.enc, cell_rc.train, vocab);
    Predictor predict = make_crf_predictor(result.best.query, result.best.crf, vocab);
    F1Report report = evaluate(predict, split.test, split.test.domain_slot_types());

    std::string row = fmt_double(lambda) + "," + strat_label + "," + std::to_string(seed) + "," +
                      fmt_double(report.average.f1);
    write_file(row_path, row + "\n");
    std::cout << "cell " << cell << ": test F1 " << fmt_double(report.average.f1) << "\n";
    rows.push_back(row);
  };

  for (double lambda : lambdas) {
    if (lambda == 0.0) {
      // the sampler never runs at lambda 0; strategy collapses to one cell per seed
      for (int s = 0; s < rc.n_seeds; ++s) {
        run_cell(0.0, "n/a", rc.train.strategy, rc.train.seed + static_cast<std::uint64_t>(s));
      }
    } else {
      for (Strategy strategy : strategies) {
        for (int s = 0; s < rc.n_seeds; ++s) {
          run_cell(lambda, strategy_name(strategy), strategy,
                   rc.train.seed + static_cast<std::uint64_t>(s));
        }
      }
    }
  }

  std::string csv = "lambda,strategy,seed,test_f1\n";
  for (const std::string& row : rows) csv += row + "\n";
  write_file(rc.out_dir + "/ablation.csv", csv);
  std::cout << "wrote " << rc.out_dir << "/ablation.csv (" << rows.size() << " rows)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// grad-check

int cmd_grad_check(std::uint64_t seed, double epsilon, bool corrupt) {
  Corpus corpus;
  corpus.add(Utterance{"alpha", {"play", "jazz", "now"}, {{"genre", 1, 2}}});
  corpus.add(Utterance{"alpha", {"find", "rock", "by", "bowie"}, {{"genre", 1, 2}, {"artist", 3, 4}}});
  corpus.add(Utterance{"beta", {"route", "to", "york"}, {{"city", 2, 3}}});
  corpus.add(Utterance{"beta", {"trains", "to", "paris", "today"}, {{"city", 2, 3}, {"date", 3, 4}}});
  Vocab vocab = Vocab::build(corpus, 1);

  EncoderConfig enc;
  enc.d_model = 8;
  enc.n_layers = 1;
  enc.n_heads = 1;
  enc.d_ff = 16;
  enc.max_len = 16;
  enc.vocab_size = vocab.size();
  enc.dropout_prob = 0.0;

  TrainConfig cfg;
  cfg.seed = seed;
  cfg.M = 3;

  TrainContext ctx;
  ctx.vocab = &vocab;
  ctx.all_slot_types = corpus.all_slot_types();
  ctx.lexicon = &corpus.lexicon();

  const Utterance& u0 = corpus.samples("alpha")[0];
  const Utterance& u2 = corpus.samples("beta")[0];
  std::vector<QueryInstance> batch{
      QueryInstance{"genre", &u0, bio_labels_for(u0, "genre")},
      QueryInstance{"city", &u2, bio_labels_for(u2, "city")},
      QueryInstance{"artist", &u0, bio_labels_for(u0, "artist")},  // no span: skip path
  };

  bool all_pass = true;
  for (double lambda : {0.0, 0.5, 1.0}) {
    cfg.lambda = lambda;
    ModelState state = init_model(enc, seed, cfg.momentum);
    double worst = grad_check(state, batch, cfg, ctx, epsilon, corrupt);
    bool pass = worst < 1e-4;
    all_pass = all_pass && pass;
    std::cout << "lambda=" << fmt_double(lambda) << " worst_rel_err=" << fmt_double(worst) << ' '
              << (pass ? "PASS" : "FAIL") << '\n';
  }
  if (!all_pass) {
    std::cerr << "gradient check failed\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// make-samples

int cmd_make_samples(const RunConfig& rc, const std::string& slot_type, int count) {
  Corpus corpus = require_corpus(rc);
  Vocab vocab = resolve_vocab(rc, corpus);
  TrainContext ctx;
  ctx.all_slot_types = corpus.all_slot_types();
  Rng rng = Rng::substream(rc.train.seed, "sampler");

  std::vector<QueryInstance> queries;
  for (QueryInstance& q : expand_corpus_queries(corpus)) {
    if (!has_queried_span(q)) continue;
    if (!slot_type.empty() && q.slot_type != slot_type) continue;
    queries.push_back(std::move(q));
    if (static_cast<int>(queries.size()) == count) break;
  }
  if (queries.empty()) {
    throw DataError(slot_type.empty() ? "corpus has no utterance with a slot span"
                                      : "no utterance has a span of slot type " + slot_type);
  }

  auto block = [](const std::string& header, const std::vector<std::string>& words,
                  const std::vector<std::string>& tags) {
    std::cout << "# domain=" << header << '\n';
    for (std::size_t i = 0; i < words.size(); ++i) std::cout << words[i] << '\t' << tags[i] << '\n';
    std::cout << '\n';
  };

  for (const QueryInstance& q : queries) {
    ContrastiveSet set =
        make_contrastive_set(rc.train.strategy, q, ctx.all_slot_types, corpus.lexicon(),
                             rc.train.M, vocab, rc.enc.max_len, rng);
    const std::string base = q.utterance->domain + "." + q.slot_type;
    std::vector<std::string> gold;
    for (std::size_t i = 0; i < q.labels.size(); ++i) gold.push_back(tag_of(q.labels[i], q.slot_type));
    block(base + ".anchor", q.utterance->words, gold);

    std::string kind = set.kind == SetKind::Template  ? "template"
                       : set.kind == SetKind::Synthetic ? "synthetic"
                                                        : "concat";
    block(base + ".positive." + kind, set.positive.words,
          std::vector<std::string>(set.positive.words.size(), "O"));
    for (std::size_t k = 0; k < set.negatives.size(); ++k) {
      block(base + ".negative" + std::to_string(k + 1), set.negatives[k].words,
            std::vector<std::string>(set.negatives[k].words.size(), "O"));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"momentum-contrastive zero-shot slot filling"};
  app.require_subcommand(1);

  // gen-data
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::string gen_config, gen_out = "corpus.txt", gen_seed;
  int gen_samples = 0;
  gen->add_option("--config", gen_config, "generator config file")->required();
  gen->add_option("--out", gen_out, "output corpus path");
  gen->add_option("--seed", gen_seed, "generation seed (falls back to $SLOTMOCO_SEED)");
  gen->add_option("--samples", gen_samples, "override samples_per_domain");

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  CommonOpts train_opts;
  train_opts.add(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  CommonOpts eval_opts;
  eval_opts.add(eval_cmd);

  CLI::App* predict_cmd = app.add_subcommand("predict", "print predicted tags for a corpus");
  CommonOpts predict_opts;
  predict_opts.add(predict_cmd);
  std::string predict_slot, predict_out;
  predict_cmd->add_option("--slot-type", predict_slot, "query a single slot type");
  predict_cmd->add_option("--out", predict_out, "write blocks to a file instead of stdout");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "lambda x strategy x seed sweep");
  CommonOpts ablate_opts;
  ablate_opts.add(ablate_cmd);

  CLI::App* check_cmd = app.add_subcommand("grad-check", "finite-difference gradient check");
  std::string check_seed;
  double check_eps = 1e-5;
  bool check_corrupt = false;
  check_cmd->add_option("--seed", check_seed, "seed (falls back to $SLOTMOCO_SEED)");
  check_cmd->add_option("--epsilon", check_eps, "finite-difference step");
  check_cmd->add_flag("--corrupt", check_corrupt)->group("");  // test hook, hidden

  CLI::App* samples_cmd = app.add_subcommand("make-samples", "print contrastive sets as corpus blocks");
  CommonOpts samples_opts;
  samples_opts.add(samples_cmd);
  std::string samples_slot;
  int samples_count = 3;
  samples_cmd->add_option("--slot-type", samples_slot, "restrict anchors to one slot type");
  samples_cmd->add_option("--count", samples_count, "number of anchors to print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  auto env_seed = [](const std::string& flag_value) -> std::uint64_t {
    if (!flag_value.empty()) return parse_u64("seed", flag_value);
    if (const char* env = std::getenv("SLOTMOCO_SEED")) return parse_u64("SLOTMOCO_SEED", env);
    return 0;
  };

  try {
    if (gen->parsed()) return cmd_gen_data(gen_config, gen_out, env_seed(gen_seed), gen_samples);
    if (train_cmd->parsed()) return cmd_train(train_opts.resolve());
    if (eval_cmd->parsed()) return cmd_eval(eval_opts.resolve());
    if (predict_cmd->parsed()) return cmd_predict(predict_opts.resolve(), predict_slot, predict_out);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_opts.resolve());
    if (check_cmd->parsed()) return cmd_grad_check(env_seed(check_seed), check_eps, check_corrupt);
    if (samples_cmd->parsed()) return cmd_make_samples(samples_opts.resolve(), samples_slot, samples_count);
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

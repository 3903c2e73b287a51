#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "slotmoco/contrast.hpp"
#include "slotmoco/corpus.hpp"
#include "slotmoco/eval.hpp"
#include "slotmoco/tokenizer.hpp"
#include "slotmoco/trainer.hpp"

namespace py = pybind11;
using namespace slotmoco;

namespace {

// Trained model + its vocabulary, the unit of inference.
struct PyModel {
  ModelState state;
  Vocab vocab;

  std::vector<std::string> predict(const std::string& slot_type,
                                   const std::vector<std::string>& words) const {
    Predictor p = make_crf_predictor(state.query, state.crf, vocab);
    Utterance utt{"", words, {}};
    std::vector<Label> labels = p(slot_type, utt);
    std::vector<std::string> tags;
    tags.reserve(labels.size());
    for (Label l : labels) tags.push_back(std::string(1, label_char(l)));
    return tags;
  }

  Vec embed(const std::string& slot_type, const std::vector<std::string>& words) const {
    EncodedQuery q = encode_query(vocab, slot_type, words, state.query.config.max_len);
    return represent(state.query, q);
  }

  py::dict evaluate_on(const Corpus& corpus) const {
    Predictor p = make_crf_predictor(state.query, state.crf, vocab);
    F1Report report = evaluate(p, corpus, corpus.domain_slot_types());
    py::dict out;
    out["csv"] = report_csv(report);
    out["table"] = report_table(report);
    out["average_f1"] = report.average.f1;
    out["average_precision"] = report.average.precision;
    out["average_recall"] = report.average.recall;
    return out;
  }

  void save(const std::string& path) const { save_checkpoint(path, state, nullptr); }

  static PyModel load(const std::string& checkpoint_path, const std::string& vocab_path) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    Vocab vocab = Vocab::load(vocab_path);
    if (vocab.size() != ck.state.query.config.vocab_size) {
      throw DataError("vocab has " + std::to_string(vocab.size()) +
                      " tokens but the checkpoint was trained with " +
                      std::to_string(ck.state.query.config.vocab_size));
    }
    return PyModel{std::move(ck.state), std::move(vocab)};
  }
};

struct PyTrainOutcome {
  PyModel model;
  double best_dev_f1 = -1.0;
  std::int64_t best_step = 0;
  std::string metrics_csv;
};

}  // namespace

PYBIND11_MODULE(_slotmoco, m) {
  m.doc() = "momentum-contrastive zero-shot slot filling";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<SlotSpan>(m, "SlotSpan")
      .def(py::init<const std::string&, int, int>(), py::arg("slot_type"), py::arg("start"),
           py::arg("end"))
      .def_readwrite("slot_type", &SlotSpan::slot_type)
      .def_readwrite("start", &SlotSpan::start)
      .def_readwrite("end", &SlotSpan::end)
      .def("__eq__", [](const SlotSpan& a, const SlotSpan& b) { return a == b; })
      .def("__repr__", [](const SlotSpan& s) {
        return "SlotSpan(" + s.slot_type + ", " + std::to_string(s.start) + ", " +
               std::to_string(s.end) + ")";
      });

  py::class_<Utterance>(m, "Utterance")
      .def(py::init<const std::string&, const std::vector<std::string>&,
                    const std::vector<SlotSpan>&>(),
           py::arg("domain"), py::arg("words"), py::arg("spans") = std::vector<SlotSpan>{})
      .def_readwrite("domain", &Utterance::domain)
      .def_readwrite("words", &Utterance::words)
      .def_readwrite("spans", &Utterance::spans);

  py::class_<Corpus>(m, "Corpus")
      .def(py::init<>())
      .def("add", &Corpus::add, py::arg("utterance"))
      .def("domains", &Corpus::domains)
      .def("has_domain", &Corpus::has_domain, py::arg("domain"))
      .def("samples", &Corpus::samples, py::arg("domain"), py::return_value_policy::copy)
      .def("all_slot_types", &Corpus::all_slot_types)
      .def("slot_types_of", &Corpus::slot_types_of, py::arg("domain"))
      .def("__len__", &Corpus::size);

  m.def("load_corpus", &load_corpus, py::arg("path"));
  m.def("save_corpus", &save_corpus, py::arg("corpus"), py::arg("path"));
  m.def("parse_corpus_text", &parse_corpus_text, py::arg("text"), py::arg("origin") = "<string>");
  m.def("corpus_to_text", &corpus_to_text, py::arg("corpus"));

  m.def(
      "generate_corpus",
      [](const std::string& config_path, std::uint64_t seed, int samples_per_domain) {
        GeneratorConfig gen = load_generator_config(config_path);
        if (samples_per_domain > 0) gen.samples_per_domain = samples_per_domain;
        return generate_synthetic_corpus(gen, seed);
      },
      py::arg("config_path"), py::arg("seed") = 0, py::arg("samples_per_domain") = 0);

  m.def(
      "leave_one_out_split",
      [](const Corpus& corpus, const std::string& target_domain, int few_shot, int dev_size,
         std::uint64_t seed) {
        SplitSpec spec;
        spec.target_domain = target_domain;
        spec.few_shot_k = few_shot;
        spec.dev_size = dev_size;
        spec.seed = seed;
        SplitResult r = leave_one_out_split(corpus, spec);
        return py::make_tuple(std::move(r.train), std::move(r.dev), std::move(r.test));
      },
      py::arg("corpus"), py::arg("target_domain"), py::arg("few_shot") = 0,
      py::arg("dev_size") = 500, py::arg("seed") = 0);

  py::class_<Vocab>(m, "Vocab")
      .def_static("build", &Vocab::build, py::arg("corpus"), py::arg("min_freq") = 1)
      .def_static("load", &Vocab::load, py::arg("path"))
      .def("save", &Vocab::save, py::arg("path"))
      .def("id", &Vocab::id, py::arg("token"))
      .def("token", &Vocab::token, py::arg("id"))
      .def("contains", &Vocab::contains, py::arg("token"))
      .def("size", &Vocab::size)
      .def("__len__", &Vocab::size);

  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init<>())
      .def_readwrite("d_model", &EncoderConfig::d_model)
      .def_readwrite("n_layers", &EncoderConfig::n_layers)
      .def_readwrite("n_heads", &EncoderConfig::n_heads)
      .def_readwrite("d_ff", &EncoderConfig::d_ff)
      .def_readwrite("max_len", &EncoderConfig::max_len)
      .def_readwrite("vocab_size", &EncoderConfig::vocab_size)
      .def_readwrite("dropout_prob", &EncoderConfig::dropout_prob);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lambda_", &TrainConfig::lambda)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("warmup_steps", &TrainConfig::warmup_steps)
      .def_readwrite("max_steps", &TrainConfig::max_steps)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("tau", &TrainConfig::tau)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("M", &TrainConfig::M)
      .def_readwrite("dropout", &TrainConfig::dropout)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("beta1", &TrainConfig::beta1)
      .def_readwrite("beta2", &TrainConfig::beta2)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("eval_interval", &TrainConfig::eval_interval)
      .def_property(
          "strategy", [](const TrainConfig& c) { return strategy_name(c.strategy); },
          [](TrainConfig& c, const std::string& s) { c.strategy = parse_strategy(s); });

  py::class_<PyModel>(m, "Model")
      .def_static("load", &PyModel::load, py::arg("checkpoint_path"), py::arg("vocab_path"))
      .def("predict", &PyModel::predict, py::arg("slot_type"), py::arg("words"))
      .def("represent", &PyModel::embed, py::arg("slot_type"), py::arg("words"))
      .def("evaluate", &PyModel::evaluate_on, py::arg("corpus"))
      .def("save", &PyModel::save, py::arg("path"));

  py::class_<PyTrainOutcome>(m, "TrainOutcome")
      .def_readonly("model", &PyTrainOutcome::model)
      .def_readonly("best_dev_f1", &PyTrainOutcome::best_dev_f1)
      .def_readonly("best_step", &PyTrainOutcome::best_step)
      .def_readonly("metrics_csv", &PyTrainOutcome::metrics_csv);

  m.def(
      "train",
      [](const Corpus& train_corpus, const Corpus& dev_corpus, EncoderConfig enc, TrainConfig cfg,
         const Vocab& vocab) {
        enc.vocab_size = vocab.size();
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(train_corpus, dev_corpus, enc, cfg, vocab);
        }
        PyTrainOutcome out;
        out.model = PyModel{std::move(r.best), vocab};
        out.best_dev_f1 = r.best_dev_f1;
        out.best_step = r.best_step;
        out.metrics_csv = std::move(r.metrics_csv);
        return out;
      },
      py::arg("train_corpus"), py::arg("dev_corpus"), py::arg("encoder"), py::arg("config"),
      py::arg("vocab"));

  m.def("info_nce", &info_nce, py::arg("q"), py::arg("keys"), py::arg("pos_index"),
        py::arg("tau"));
}

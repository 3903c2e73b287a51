#include <doctest.h>

#include <cmath>

#include "slotmoco/eval.hpp"

using namespace slotmoco;

namespace {

std::vector<Label> tags(std::initializer_list<char> cs) {
  std::vector<Label> out;
  for (char c : cs) {
    out.push_back(c == 'B' ? Label::B : c == 'I' ? Label::I : Label::O);
  }
  return out;
}

std::vector<std::pair<int, int>> bounds(const std::vector<SlotSpan>& spans) {
  std::vector<std::pair<int, int>> out;
  for (const SlotSpan& s : spans) out.emplace_back(s.start, s.end);
  return out;
}

// Two utterances, one domain; a hand-wired predictor produces exactly
// 1 TP (genre of utt1), 1 FP (artist read at [0,1)), and 1 FN (the missed
// artist at [3,4)). Worksheet: P = 1/2, R = 1/2, F1 = 1/2.
Corpus worksheet_corpus() {
  Corpus c;
  c.add(Utterance{"music", {"play", "jazz", "by", "miles"}, {{"genre", 1, 2}, {"artist", 3, 4}}});
  c.add(Utterance{"music", {"queue", "something"}, {}});
  return c;
}

Predictor worksheet_predictor() {
  return [](const std::string& slot_type, const Utterance& utt) {
    std::vector<Label> out(utt.words.size(), Label::O);
    if (utt.words.size() == 4 && slot_type == "genre") out[1] = Label::B;
    if (utt.words.size() == 4 && slot_type == "artist") out[0] = Label::B;
    return out;
  };
}

Predictor oracle_predictor() {
  return [](const std::string& slot_type, const Utterance& utt) {
    return bio_labels_for(utt, slot_type);
  };
}

Predictor all_o_predictor() {
  return [](const std::string&, const Utterance& utt) {
    return std::vector<Label>(utt.words.size(), Label::O);
  };
}

}  // namespace

TEST_CASE("extract_spans: spec cases") {
  CHECK(bounds(extract_spans(tags({'O', 'B', 'I', 'O'}), "t")) ==
        std::vector<std::pair<int, int>>{{1, 3}});
  CHECK(bounds(extract_spans(tags({'I', 'I', 'O'}), "t")) ==
        std::vector<std::pair<int, int>>{{0, 2}});
  CHECK(bounds(extract_spans(tags({'B', 'B'}), "t")) ==
        std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
}

TEST_CASE("extract_spans: edges") {
  CHECK(extract_spans({}, "t").empty());
  CHECK(extract_spans(tags({'O', 'O', 'O'}), "t").empty());
  CHECK(bounds(extract_spans(tags({'B'}), "t")) == std::vector<std::pair<int, int>>{{0, 1}});
  CHECK(bounds(extract_spans(tags({'I'}), "t")) == std::vector<std::pair<int, int>>{{0, 1}});
  CHECK(bounds(extract_spans(tags({'B', 'I', 'I'}), "t")) ==
        std::vector<std::pair<int, int>>{{0, 3}});
  CHECK(bounds(extract_spans(tags({'B', 'I', 'B', 'I'}), "t")) ==
        std::vector<std::pair<int, int>>{{0, 2}, {2, 4}});
  CHECK(bounds(extract_spans(tags({'O', 'I', 'B'}), "t")) ==
        std::vector<std::pair<int, int>>{{1, 2}, {2, 3}});
  for (const SlotSpan& s : extract_spans(tags({'B', 'I', 'B'}), "genre")) {
    CHECK(s.slot_type == "genre");
  }
}

TEST_CASE("counts_to_f1: zero cases and perfect case") {
  F1Counts zero = counts_to_f1(0, 0, 0);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);
  F1Counts perfect = counts_to_f1(5, 0, 0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
}

TEST_CASE("span_f1: perfect match over 3 spans") {
  std::vector<SlotSpan> gold{{"a", 0, 1}, {"b", 2, 4}, {"a", 5, 6}};
  F1Counts c = span_f1(gold, gold);
  CHECK(c.precision == 1.0);
  CHECK(c.recall == 1.0);
  CHECK(c.f1 == 1.0);
  CHECK(c.tp == 3);
}

TEST_CASE("span_f1: no predictions against 2 gold spans") {
  F1Counts c = span_f1({{"a", 0, 1}, {"a", 2, 3}}, {});
  CHECK(c.precision == 0.0);
  CHECK(c.recall == 0.0);
  CHECK(c.f1 == 0.0);
  CHECK(c.fn == 2);
  CHECK(c.fp == 0);
}

TEST_CASE("span_f1: 2 predicted, 1 correct, 2 gold") {
  std::vector<SlotSpan> gold{{"a", 0, 1}, {"a", 3, 5}};
  std::vector<SlotSpan> pred{{"a", 0, 1}, {"a", 2, 3}};
  F1Counts c = span_f1(gold, pred);
  CHECK(c.precision == 0.5);
  CHECK(c.recall == 0.5);
  CHECK(c.f1 == 0.5);
}

TEST_CASE("span_f1: each gold span is matchable once") {
  std::vector<SlotSpan> gold{{"a", 1, 3}};
  std::vector<SlotSpan> pred{{"a", 1, 3}, {"a", 1, 3}};
  F1Counts c = span_f1(gold, pred);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 0);
  CHECK(c.recall == 1.0);
  CHECK(c.precision == 0.5);
}

TEST_CASE("span_f1: slot type participates in the match") {
  F1Counts c = span_f1({{"genre", 1, 3}}, {{"artist", 1, 3}});
  CHECK(c.tp == 0);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
}

TEST_CASE("evaluate: worksheet fixture gives the hand-computed report") {
  Corpus corpus = worksheet_corpus();
  F1Report report = evaluate(worksheet_predictor(), corpus, corpus.domain_slot_types());
  REQUIRE(report.rows.size() == 1);
  const F1Counts& c = report.rows[0].counts;
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.precision == 0.5);
  CHECK(c.recall == 0.5);
  CHECK(c.f1 == 0.5);
  CHECK(report.average.f1 == 0.5);
  CHECK(report.average.tp == 1);
}

TEST_CASE("evaluate: worksheet CSV bytes") {
  Corpus corpus = worksheet_corpus();
  F1Report report = evaluate(worksheet_predictor(), corpus, corpus.domain_slot_types());
  CHECK(report_csv(report) ==
        "domain,precision,recall,f1,tp,fp,fn\n"
        "music,0.5,0.5,0.5,1,1,1\n"
        "AVERAGE,0.5,0.5,0.5,1,1,1\n");
}

TEST_CASE("evaluate: oracle predictor scores 1.0 everywhere") {
  Corpus c;
  c.add(Utterance{"music", {"play", "jazz", "by", "miles"}, {{"genre", 1, 2}, {"artist", 3, 4}}});
  c.add(Utterance{"weather", {"forecast", "for", "york"}, {{"city", 2, 3}}});
  F1Report report = evaluate(oracle_predictor(), c, c.domain_slot_types());
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) {
    CHECK(row.counts.f1 == 1.0);
    CHECK(row.counts.fp == 0);
    CHECK(row.counts.fn == 0);
  }
  CHECK(report.average.f1 == 1.0);
}

TEST_CASE("evaluate: all-O predictor scores 0 wherever gold spans exist") {
  Corpus c;
  c.add(Utterance{"music", {"play", "jazz"}, {{"genre", 1, 2}}});
  F1Report report = evaluate(all_o_predictor(), c, c.domain_slot_types());
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].counts.f1 == 0.0);
  CHECK(report.rows[0].counts.fn == 1);
  CHECK(report.rows[0].counts.tp == 0);
}

TEST_CASE("evaluate: macro average is the unweighted mean of domain F1s") {
  Corpus c;
  // domain a: oracle-easy; domain b: the predictor misses everything
  c.add(Utterance{"a", {"play", "jazz"}, {{"genre", 1, 2}}});
  c.add(Utterance{"b", {"find", "rock", "songs"}, {{"genre", 1, 2}}});
  Predictor p = [](const std::string& slot_type, const Utterance& utt) {
    if (utt.domain == "a") return bio_labels_for(utt, slot_type);
    return std::vector<Label>(utt.words.size(), Label::O);
  };
  F1Report report = evaluate(p, c, c.domain_slot_types());
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].counts.f1 == 1.0);
  CHECK(report.rows[1].counts.f1 == 0.0);
  CHECK(report.average.f1 == 0.5);
  CHECK(report.average.precision == 0.5);
  // counts are sums, not means
  CHECK(report.average.tp == 1);
  CHECK(report.average.fn == 1);
}

TEST_CASE("evaluate: TP+FN counts gold spans, TP+FP counts predictions") {
  Corpus c;
  c.add(Utterance{"music", {"play", "jazz", "by", "miles"}, {{"genre", 1, 2}, {"artist", 3, 4}}});
  c.add(Utterance{"music", {"stop", "it"}, {}});
  // always predict a span at [0,1): one prediction per query
  Predictor p = [](const std::string&, const Utterance& utt) {
    std::vector<Label> out(utt.words.size(), Label::O);
    out[0] = Label::B;
    return out;
  };
  F1Report report = evaluate(p, c, c.domain_slot_types());
  REQUIRE(report.rows.size() == 1);
  const F1Counts& counts = report.rows[0].counts;

  std::int64_t gold_total = 0;
  std::int64_t queries = 0;
  const auto& slots = c.domain_slot_types().at("music");
  for (const Utterance& utt : c.samples("music")) {
    for (const std::string& t : slots) {
      ++queries;
      for (const SlotSpan& s : utt.spans) gold_total += s.slot_type == t ? 1 : 0;
    }
  }
  CHECK(counts.tp + counts.fn == gold_total);
  CHECK(counts.tp + counts.fp == queries);  // one predicted span per query
}

TEST_CASE("evaluate: missing domain in the slot-type map is an error") {
  Corpus c;
  c.add(Utterance{"music", {"play"}, {}});
  std::map<std::string, std::set<std::string>> wrong{{"weather", {"city"}}};
  CHECK_THROWS_AS(evaluate(all_o_predictor(), c, wrong), DataError);
}

TEST_CASE("evaluate: predictor label-length mismatch is an error") {
  Corpus c;
  c.add(Utterance{"music", {"play", "jazz"}, {{"genre", 1, 2}}});
  Predictor bad = [](const std::string&, const Utterance&) {
    return std::vector<Label>{Label::O};
  };
  CHECK_THROWS_AS(evaluate(bad, c, c.domain_slot_types()), DataError);
}

TEST_CASE("report_csv: one row per domain plus AVERAGE") {
  Corpus c;
  c.add(Utterance{"a", {"x"}, {}});
  c.add(Utterance{"b", {"y"}, {}});
  c.add(Utterance{"c", {"z"}, {}});
  F1Report report = evaluate(all_o_predictor(), c, c.domain_slot_types());
  std::string csv = report_csv(report);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n' ? 1 : 0;
  CHECK(lines == 5);  // header + 3 domains + AVERAGE
  CHECK(csv.rfind("AVERAGE,") != std::string::npos);
  CHECK(csv.substr(0, csv.find('\n')) == "domain,precision,recall,f1,tp,fp,fn");
}

TEST_CASE("report_table: mentions every domain and AVERAGE") {
  Corpus corpus = worksheet_corpus();
  F1Report report = evaluate(worksheet_predictor(), corpus, corpus.domain_slot_types());
  std::string table = report_table(report);
  CHECK(table.find("music") != std::string::npos);
  CHECK(table.find("AVERAGE") != std::string::npos);
}

TEST_CASE("make_crf_predictor: well-formed and deterministic") {
  Corpus c;
  c.add(Utterance{"music", {"play", "jazz", "by", "miles"}, {{"genre", 1, 2}, {"artist", 3, 4}}});
  c.add(Utterance{"music", {"queue", "the", "song"}, {{"track", 2, 3}}});
  Vocab vocab = Vocab::build(c, 1);

  EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.max_len = 16;
  cfg.vocab_size = vocab.size();
  cfg.dropout_prob = 0.0;
  EncoderParams enc = init_encoder(cfg, 3);
  CrfParams crf = init_crf(cfg.d_model, 3);

  Predictor p = make_crf_predictor(enc, crf, vocab);
  const Utterance& utt = c.samples("music")[0];
  std::vector<Label> a = p("genre", utt);
  CHECK(a.size() == utt.words.size());
  CHECK(p("genre", utt) == a);

  F1Report r1 = evaluate(p, c, c.domain_slot_types());
  F1Report r2 = evaluate(p, c, c.domain_slot_types());
  CHECK(report_csv(r1) == report_csv(r2));
}

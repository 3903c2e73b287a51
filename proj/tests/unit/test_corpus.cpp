#include <doctest.h>

#include <algorithm>
#include <set>

#include "slotmoco/corpus.hpp"

using namespace slotmoco;

namespace {

Utterance make_utt(const std::string& domain, std::vector<std::string> words,
                   std::vector<SlotSpan> spans) {
  return Utterance{domain, std::move(words), std::move(spans)};
}

// A small 3-domain corpus used across split/lexicon tests.
Corpus small_corpus(int per_domain = 12) {
  Corpus c;
  for (int i = 0; i < per_domain; ++i) {
    std::string n = std::to_string(i);
    c.add(make_utt("music", {"play", "song" + n, "by", "artist" + n},
                   {{"track", 1, 2}, {"artist", 3, 4}}));
    c.add(make_utt("weather", {"forecast", "for", "city" + n}, {{"city", 2, 3}}));
    c.add(make_utt("books", {"read", "title" + n, "in", "city" + n},
                   {{"title", 1, 2}, {"city", 3, 4}}));
  }
  return c;
}

}  // namespace

TEST_CASE("corpus: single block parses into utterance with span") {
  Corpus c = parse_corpus_text("# domain=music\nplay\tO\njazz\tB-genre\n", "test");
  REQUIRE(c.size() == 1);
  const Utterance& u = c.samples("music")[0];
  CHECK(u.domain == "music");
  CHECK(u.words == std::vector<std::string>{"play", "jazz"});
  REQUIRE(u.spans.size() == 1);
  CHECK(u.spans[0] == SlotSpan{"genre", 1, 2});
}

TEST_CASE("corpus: empty file is an empty corpus") {
  Corpus c = parse_corpus_text("", "test");
  CHECK(c.empty());
  CHECK(c.domains().empty());
}

TEST_CASE("corpus: orphan I tag reports line number") {
  CHECK_THROWS_WITH_AS(parse_corpus_text("# domain=music\njazz\tI-genre\n", "t"),
                       doctest::Contains("line 2"), DataError);
  // I after a different type's B is also orphan
  CHECK_THROWS_WITH_AS(
      parse_corpus_text("# domain=music\na\tB-artist\nb\tI-genre\n", "t"),
      doctest::Contains("line 3"), DataError);
  // I after O breaks the run
  CHECK_THROWS_AS(parse_corpus_text("# domain=m\na\tB-x\nb\tO\nc\tI-x\n", "t"), DataError);
}

TEST_CASE("corpus: malformed tags and structure errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_corpus_text("# domain=music\nplay\tX\n", "t"),
                       doctest::Contains("line 2"), DataError);
  CHECK_THROWS_WITH_AS(parse_corpus_text("play\tO\n", "t"),
                       doctest::Contains("line 1"), DataError);
  CHECK_THROWS_AS(parse_corpus_text("# domain=music\nplay no tab\n", "t"), DataError);
  CHECK_THROWS_AS(parse_corpus_text("# domain=music\na\tO\tO\n", "t"), DataError);
  CHECK_THROWS_AS(parse_corpus_text("# domain=music\nplay\tB-Genre\n", "t"), DataError);
}

TEST_CASE("corpus: multi-word span and adjacent spans round-trip") {
  std::string text =
      "# domain=music\n"
      "play\tO\n"
      "youtube\tB-service\n"
      "music\tI-service\n"
      "now\tO\n"
      "\n"
      "# domain=music\n"
      "a\tB-x\n"
      "b\tB-x\n"
      "c\tI-x\n";
  Corpus c = parse_corpus_text(text, "t");
  REQUIRE(c.size() == 2);
  CHECK(c.samples("music")[0].spans == std::vector<SlotSpan>{{"service", 1, 3}});
  CHECK(c.samples("music")[1].spans == std::vector<SlotSpan>{{"x", 0, 1}, {"x", 1, 3}});
  CHECK(corpus_to_text(c) == text);
}

TEST_CASE("corpus: canonical text sorts domains and separates blocks with one blank line") {
  Corpus c;
  c.add(make_utt("weather", {"rain"}, {}));
  c.add(make_utt("music", {"play", "jazz"}, {{"genre", 1, 2}}));
  CHECK(corpus_to_text(c) ==
        "# domain=music\nplay\tO\njazz\tB-genre\n\n# domain=weather\nrain\tO\n");
}

TEST_CASE("corpus: round trip through canonical form is byte-identical") {
  Corpus c = small_corpus(4);
  std::string once = corpus_to_text(c);
  std::string twice = corpus_to_text(parse_corpus_text(once, "t"));
  CHECK(once == twice);
}

TEST_CASE("corpus: lexicon holds exactly the observed span texts") {
  Corpus c;
  c.add(make_utt("music", {"play", "youtube", "music"}, {{"service", 1, 3}}));
  c.add(make_utt("music", {"open", "spotify"}, {{"service", 1, 2}}));
  c.add(make_utt("music", {"open", "spotify", "again"}, {{"service", 1, 2}}));
  const auto& lex = c.lexicon();
  REQUIRE(lex.count("service") == 1);
  std::set<Phrase> expect{{"youtube", "music"}, {"spotify"}};
  CHECK(lex.at("service") == expect);

  // every lexicon phrase occurs as a gold span text and vice versa
  for (const auto& [type, phrases] : lex) {
    for (const auto& phrase : phrases) {
      bool found = false;
      for (const auto& d : c.domains()) {
        for (const auto& u : c.samples(d)) {
          for (const auto& s : u.spans) {
            if (s.slot_type == type &&
                Phrase(u.words.begin() + s.start, u.words.begin() + s.end) == phrase) {
              found = true;
            }
          }
        }
      }
      CHECK(found);
    }
  }
}

TEST_CASE("corpus: rejects overlapping spans and bad ranges") {
  Corpus c;
  CHECK_THROWS_AS(c.add(make_utt("m", {"a", "b"}, {{"x", 0, 2}, {"y", 1, 2}})), DataError);
  CHECK_THROWS_AS(c.add(make_utt("m", {"a"}, {{"x", 0, 2}})), DataError);
  CHECK_THROWS_AS(c.add(make_utt("m", {"a"}, {{"x", 1, 1}})), DataError);
  CHECK_THROWS_AS(c.add(make_utt("m", {}, {})), DataError);
}

TEST_CASE("split: zero-shot train has no target samples") {
  Corpus c = small_corpus();
  SplitSpec spec{"music", 0, 5, 9};
  SplitResult r = leave_one_out_split(c, spec);
  CHECK_FALSE(r.train.has_domain("music"));
  CHECK(r.train.size() == 24);
  CHECK(r.dev.size() == 5);
  CHECK(r.test.size() == 7);
}

TEST_CASE("split: few-shot count lands in train") {
  Corpus c = small_corpus();
  SplitSpec spec{"music", 3, 5, 9};
  SplitResult r = leave_one_out_split(c, spec);
  REQUIRE(r.train.has_domain("music"));
  CHECK(r.train.samples("music").size() == 3);
  CHECK(r.dev.size() == 5);
  CHECK(r.test.size() == 4);
}

TEST_CASE("split: deterministic and disjoint, union covers target") {
  Corpus c = small_corpus();
  SplitSpec spec{"weather", 2, 4, 123};
  SplitResult a = leave_one_out_split(c, spec);
  SplitResult b = leave_one_out_split(c, spec);
  CHECK(corpus_to_text(a.train) == corpus_to_text(b.train));
  CHECK(corpus_to_text(a.dev) == corpus_to_text(b.dev));
  CHECK(corpus_to_text(a.test) == corpus_to_text(b.test));

  auto words_of = [](const Corpus& c, const std::string& d) {
    std::multiset<std::string> out;
    if (!c.has_domain(d)) return out;
    for (const auto& u : c.samples(d)) out.insert(u.words[2]);
    return out;
  };
  std::multiset<std::string> few = words_of(a.train, "weather");
  std::multiset<std::string> dev = words_of(a.dev, "weather");
  std::multiset<std::string> test = words_of(a.test, "weather");
  std::multiset<std::string> all = words_of(c, "weather");
  std::multiset<std::string> joined = few;
  joined.insert(dev.begin(), dev.end());
  joined.insert(test.begin(), test.end());
  CHECK(joined == all);

  // different seed reshuffles
  SplitSpec spec2 = spec;
  spec2.seed = 124;
  SplitResult d2 = leave_one_out_split(c, spec2);
  CHECK(corpus_to_text(a.dev) != corpus_to_text(d2.dev));
}

TEST_CASE("split: protocol violations are loud") {
  Corpus c = small_corpus(3);
  CHECK_THROWS_AS(leave_one_out_split(c, SplitSpec{"missing", 0, 1, 0}), DataError);
  CHECK_THROWS_AS(leave_one_out_split(c, SplitSpec{"music", 2, 2, 0}), DataError);
  Corpus single;
  single.add(make_utt("only", {"x"}, {}));
  CHECK_THROWS_AS(leave_one_out_split(single, SplitSpec{"only", 0, 0, 0}), DataError);
}

TEST_CASE("expand_queries: one instance per type, sorted, BIO per type") {
  Utterance u = make_utt("music", {"play", "youtube", "music", "loud"},
                         {{"service", 1, 3}, {"volume", 3, 4}});
  auto qs = expand_queries(u, {"volume", "service", "genre"});
  REQUIRE(qs.size() == 3);
  CHECK(qs[0].slot_type == "genre");
  CHECK(qs[1].slot_type == "service");
  CHECK(qs[2].slot_type == "volume");
  CHECK(qs[0].labels == std::vector<Label>{Label::O, Label::O, Label::O, Label::O});
  CHECK(qs[1].labels == std::vector<Label>{Label::O, Label::B, Label::I, Label::O});
  CHECK(qs[2].labels == std::vector<Label>{Label::O, Label::O, Label::O, Label::B});

  // spans reconstructed from all-type labels equal the original span set
  std::vector<SlotSpan> rebuilt;
  for (const auto& q : qs) {
    int start = -1;
    for (int i = 0; i <= static_cast<int>(q.labels.size()); ++i) {
      bool inside = i < static_cast<int>(q.labels.size()) && q.labels[i] != Label::O;
      bool opens = i < static_cast<int>(q.labels.size()) && q.labels[i] == Label::B;
      if (start >= 0 && (!inside || opens)) {
        rebuilt.push_back({q.slot_type, start, i});
        start = -1;
      }
      if (opens) start = i;
    }
  }
  std::sort(rebuilt.begin(), rebuilt.end(),
            [](const SlotSpan& a, const SlotSpan& b) { return a.start < b.start; });
  CHECK(rebuilt == u.spans);
}

TEST_CASE("generator: template substitution places spans at correct offsets") {
  GeneratorConfig gen;
  gen.samples_per_domain = 1;
  gen.domains = {{"music", {"artist", "service"}, {"play [artist] on [service]"}},
                 {"d2", {"artist"}, {"who is [artist]"}},
                 {"d3", {"service"}, {"open [service]"}}};
  gen.entities["artist"] = {{"the", "beatles"}};
  gen.entities["service"] = {{"spotify"}};
  Corpus c = generate_synthetic_corpus(gen, 1);
  const Utterance& u = c.samples("music")[0];
  CHECK(u.words == std::vector<std::string>{"play", "the", "beatles", "on", "spotify"});
  CHECK(u.spans == std::vector<SlotSpan>{{"artist", 1, 3}, {"service", 4, 5}});
}

TEST_CASE("generator: deterministic given seed, counts multiply out") {
  ConfigMap cfg = parse_config_text(
      "samples_per_domain = 100\n"
      "domains = a, b, c, d\n"
      "domain.a.slots = city\n"
      "domain.a.templates = go to [city] | leave [city]\n"
      "domain.b.slots = city, food\n"
      "domain.b.templates = eat [food] in [city]\n"
      "domain.c.slots = food\n"
      "domain.c.templates = cook [food]\n"
      "domain.d.slots = city\n"
      "domain.d.templates = fly to [city]\n"
      "slot.city.entities = paris | new york\n"
      "slot.food.entities = pho | pad thai | udon\n");
  GeneratorConfig gen = parse_generator_config(cfg);
  Corpus c1 = generate_synthetic_corpus(gen, 7);
  Corpus c2 = generate_synthetic_corpus(gen, 7);
  CHECK(c1.size() == 400);
  CHECK(corpus_to_text(c1) == corpus_to_text(c2));
  Corpus c3 = generate_synthetic_corpus(gen, 8);
  CHECK(corpus_to_text(c1) != corpus_to_text(c3));
}

TEST_CASE("generator: config validation") {
  // undeclared placeholder
  ConfigMap bad = parse_config_text(
      "domains = a, b, c\n"
      "domain.a.slots = city\n"
      "domain.a.templates = go to [city] at [time]\n"
      "domain.b.slots = city\n"
      "domain.b.templates = in [city]\n"
      "domain.c.slots = city\n"
      "domain.c.templates = near [city]\n"
      "slot.city.entities = rome\n");
  CHECK_THROWS_WITH_AS(parse_generator_config(bad), doctest::Contains("time"), DataError);

  // fewer than 3 domains
  ConfigMap two = parse_config_text(
      "domains = a, b\n"
      "domain.a.slots = city\n"
      "domain.a.templates = go [city]\n"
      "domain.b.slots = city\n"
      "domain.b.templates = in [city]\n"
      "slot.city.entities = rome\n");
  CHECK_THROWS_AS(parse_generator_config(two), DataError);

  // no shared slot type
  ConfigMap unshared = parse_config_text(
      "domains = a, b, c\n"
      "domain.a.slots = x\n"
      "domain.a.templates = go [x]\n"
      "domain.b.slots = y\n"
      "domain.b.templates = in [y]\n"
      "domain.c.slots = z\n"
      "domain.c.templates = near [z]\n"
      "slot.x.entities = e1\n"
      "slot.y.entities = e2\n"
      "slot.z.entities = e3\n");
  CHECK_THROWS_AS(parse_generator_config(unshared), DataError);
}

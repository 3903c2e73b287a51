#include "slotmoco/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "slotmoco/rng.hpp"

namespace slotmoco {

namespace {

bool valid_slot_type_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
  }
  return true;
}

void validate_utterance(const Utterance& utt) {
  if (utt.domain.empty()) throw DataError("utterance with empty domain");
  if (utt.words.empty()) throw DataError("utterance with no words (domain " + utt.domain + ")");
  int n = static_cast<int>(utt.words.size());
  int prev_end = 0;
  for (const SlotSpan& s : utt.spans) {
    if (!valid_slot_type_name(s.slot_type)) {
      throw DataError("invalid slot type name \"" + s.slot_type + "\"");
    }
    if (!(0 <= s.start && s.start < s.end && s.end <= n)) {
      throw DataError("span out of range in domain " + utt.domain);
    }
    if (s.start < prev_end) {
      throw DataError("overlapping spans in domain " + utt.domain);
    }
    prev_end = s.end;
  }
}

}  // namespace

void Corpus::add(Utterance utt) {
  std::sort(utt.spans.begin(), utt.spans.end(),
            [](const SlotSpan& a, const SlotSpan& b) { return a.start < b.start; });
  validate_utterance(utt);
  domain_slots_[utt.domain];  // a domain with no spans still has an (empty) type set
  for (const SlotSpan& s : utt.spans) {
    domain_slots_[utt.domain].insert(s.slot_type);
    Phrase text(utt.words.begin() + s.start, utt.words.begin() + s.end);
    lexicon_[s.slot_type].insert(std::move(text));
  }
  by_domain_[utt.domain].push_back(std::move(utt));
  ++size_;
}

std::vector<std::string> Corpus::domains() const {
  std::vector<std::string> out;
  out.reserve(by_domain_.size());
  for (const auto& [d, _] : by_domain_) out.push_back(d);
  return out;
}

bool Corpus::has_domain(const std::string& domain) const {
  return by_domain_.count(domain) != 0;
}

const std::vector<Utterance>& Corpus::samples(const std::string& domain) const {
  auto it = by_domain_.find(domain);
  if (it == by_domain_.end()) throw DataError("unknown domain: " + domain);
  return it->second;
}

std::vector<std::string> Corpus::slot_types_of(const std::string& domain) const {
  auto it = domain_slots_.find(domain);
  if (it == domain_slots_.end()) return {};
  return {it->second.begin(), it->second.end()};
}

std::vector<std::string> Corpus::all_slot_types() const {
  std::vector<std::string> out;
  for (const auto& [t, _] : lexicon_) out.push_back(t);
  return out;
}

namespace {

struct TagParse {
  Label label;
  std::string slot_type;  // empty for O
};

TagParse parse_tag(const std::string& tag, int lineno) {
  if (tag == "O") return {Label::O, ""};
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    std::string type = tag.substr(2);
    if (!valid_slot_type_name(type)) {
      throw DataError("line " + std::to_string(lineno) + ": bad slot type in tag \"" + tag + "\"");
    }
    return {tag[0] == 'B' ? Label::B : Label::I, type};
  }
  throw DataError("line " + std::to_string(lineno) + ": malformed tag \"" + tag + "\" (expected O, B-<type>, I-<type>)");
}

struct RawLine {
  std::string word;
  std::string tag;
  int lineno;
};

Utterance build_utterance(const std::string& domain, const std::vector<RawLine>& lines) {
  Utterance utt;
  utt.domain = domain;
  SlotSpan open;
  bool in_span = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    TagParse tp = parse_tag(lines[i].tag, lines[i].lineno);
    utt.words.push_back(lines[i].word);
    int pos = static_cast<int>(i);
    switch (tp.label) {
      case Label::O:
        if (in_span) {
          utt.spans.push_back(open);
          in_span = false;
        }
        break;
      case Label::B:
        if (in_span) utt.spans.push_back(open);
        open = SlotSpan{tp.slot_type, pos, pos + 1};
        in_span = true;
        break;
      case Label::I:
        if (!in_span || open.slot_type != tp.slot_type) {
          throw DataError("line " + std::to_string(lines[i].lineno) + ": I-" + tp.slot_type +
                          " does not continue a B-" + tp.slot_type + "/I-" + tp.slot_type + " run");
        }
        open.end = pos + 1;
        break;
    }
  }
  if (in_span) utt.spans.push_back(open);
  return utt;
}

}  // namespace

Corpus parse_corpus_text(const std::string& text, const std::string& origin) {
  Corpus corpus;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;

  std::string domain;
  std::vector<RawLine> block;
  bool in_block = false;

  auto flush = [&]() {
    if (!in_block) return;
    if (block.empty()) {
      throw DataError(origin + ": block for domain " + domain + " has no token lines");
    }
    corpus.add(build_utterance(domain, block));
    block.clear();
    in_block = false;
  };

  try {
    while (std::getline(ss, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) {
        flush();
        continue;
      }
      if (line.rfind("# domain=", 0) == 0) {
        flush();
        domain = trim(line.substr(9));
        if (domain.empty()) {
          throw DataError("line " + std::to_string(lineno) + ": empty domain name");
        }
        in_block = true;
        continue;
      }
      if (!in_block) {
        throw DataError("line " + std::to_string(lineno) + ": token line before any \"# domain=\" header");
      }
      std::size_t tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
        throw DataError("line " + std::to_string(lineno) + ": expected exactly one <word>\\t<tag> pair");
      }
      std::string word = line.substr(0, tab);
      std::string tag = line.substr(tab + 1);
      if (word.empty() || tag.empty()) {
        throw DataError("line " + std::to_string(lineno) + ": empty word or tag");
      }
      block.push_back(RawLine{word, tag, lineno});
    }
    flush();
  } catch (const DataError& e) {
    throw DataError(origin + ": " + e.what());
  }
  return corpus;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus_text(buf.str(), path);
}

std::string corpus_to_text(const Corpus& corpus) {
  std::ostringstream out;
  bool first = true;
  for (const std::string& domain : corpus.domains()) {
    for (const Utterance& utt : corpus.samples(domain)) {
      if (!first) out << "\n";
      first = false;
      out << "# domain=" << domain << "\n";
      std::vector<Label> labels(utt.words.size(), Label::O);
      std::vector<std::string> types(utt.words.size());
      for (const SlotSpan& s : utt.spans) {
        labels[s.start] = Label::B;
        types[s.start] = s.slot_type;
        for (int i = s.start + 1; i < s.end; ++i) {
          labels[i] = Label::I;
          types[i] = s.slot_type;
        }
      }
      for (std::size_t i = 0; i < utt.words.size(); ++i) {
        out << utt.words[i] << '\t';
        if (labels[i] == Label::O) {
          out << 'O';
        } else {
          out << label_char(labels[i]) << '-' << types[i];
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  out << corpus_to_text(corpus);
}

SplitResult leave_one_out_split(const Corpus& corpus, const SplitSpec& spec) {
  if (!corpus.has_domain(spec.target_domain)) {
    throw DataError("split target domain not in corpus: " + spec.target_domain);
  }
  if (corpus.domains().size() < 2) {
    throw DataError("leave-one-out split needs at least 2 domains");
  }
  const auto& target = corpus.samples(spec.target_domain);
  int n_target = static_cast<int>(target.size());
  if (spec.few_shot_k < 0 || spec.dev_size < 0) {
    throw DataError("negative few_shot_k or dev_size");
  }
  if (spec.few_shot_k + spec.dev_size > n_target) {
    throw DataError("dev_size + few_shot_k (" + std::to_string(spec.dev_size + spec.few_shot_k) +
                    ") exceeds target domain size (" + std::to_string(n_target) + ")");
  }

  Rng rng = Rng::substream(spec.seed, "split");
  std::vector<std::size_t> order(target.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<std::size_t> few(order.begin(), order.begin() + spec.few_shot_k);
  std::vector<std::size_t> dev(order.begin() + spec.few_shot_k, order.begin() + spec.few_shot_k + spec.dev_size);
  std::vector<std::size_t> test(order.begin() + spec.few_shot_k + spec.dev_size, order.end());
  std::sort(few.begin(), few.end());
  std::sort(dev.begin(), dev.end());
  std::sort(test.begin(), test.end());

  SplitResult result;
  for (const std::string& domain : corpus.domains()) {
    if (domain == spec.target_domain) continue;
    for (const Utterance& utt : corpus.samples(domain)) result.train.add(utt);
  }
  for (std::size_t i : few) result.train.add(target[i]);
  for (std::size_t i : dev) result.dev.add(target[i]);
  for (std::size_t i : test) result.test.add(target[i]);
  return result;
}

std::vector<Label> bio_labels_for(const Utterance& utt, const std::string& slot_type) {
  std::vector<Label> labels(utt.words.size(), Label::O);
  for (const SlotSpan& s : utt.spans) {
    if (s.slot_type != slot_type) continue;
    labels[s.start] = Label::B;
    for (int i = s.start + 1; i < s.end; ++i) labels[i] = Label::I;
  }
  return labels;
}

std::vector<QueryInstance> expand_queries(const Utterance& utt, const std::set<std::string>& slot_types) {
  if (slot_types.empty()) throw DataError("expand_queries: empty slot type set");
  std::vector<QueryInstance> out;
  out.reserve(slot_types.size());
  for (const std::string& t : slot_types) {
    out.push_back(QueryInstance{t, &utt, bio_labels_for(utt, t)});
  }
  return out;
}

namespace {

bool is_placeholder(const std::string& token) {
  return token.size() >= 3 && token.front() == '[' && token.back() == ']';
}

std::string placeholder_name(const std::string& token) {
  return token.substr(1, token.size() - 2);
}

}  // namespace

GeneratorConfig parse_generator_config(const ConfigMap& cfg) {
  GeneratorConfig gen;
  auto it = cfg.find("samples_per_domain");
  if (it != cfg.end()) gen.samples_per_domain = std::stoi(it->second);
  if (gen.samples_per_domain <= 0) throw DataError("generator: samples_per_domain must be positive");

  it = cfg.find("domains");
  if (it == cfg.end()) throw DataError("generator: missing \"domains\" key");
  std::vector<std::string> domain_names = split_list(it->second, ',');
  if (domain_names.size() < 3) throw DataError("generator: need at least 3 domains");

  for (const std::string& name : domain_names) {
    GeneratorConfig::Domain d;
    d.name = name;
    auto slots_it = cfg.find("domain." + name + ".slots");
    if (slots_it == cfg.end()) throw DataError("generator: missing domain." + name + ".slots");
    d.slot_types = split_list(slots_it->second, ',');
    auto tmpl_it = cfg.find("domain." + name + ".templates");
    if (tmpl_it == cfg.end()) throw DataError("generator: missing domain." + name + ".templates");
    d.templates = split_list(tmpl_it->second, '|');
    if (d.templates.empty()) throw DataError("generator: domain " + name + " has no templates");
    gen.domains.push_back(std::move(d));
  }

  for (const auto& [key, value] : cfg) {
    if (key.rfind("slot.", 0) == 0 && key.size() > 14 && key.substr(key.size() - 9) == ".entities") {
      std::string slot = key.substr(5, key.size() - 14);
      if (!valid_slot_type_name(slot)) throw DataError("generator: bad slot type name " + slot);
      std::vector<Phrase> phrases;
      for (const std::string& p : split_list(value, '|')) phrases.push_back(split_words(p));
      gen.entities[slot] = std::move(phrases);
    }
  }

  // Validate: every template placeholder is a declared slot with entities,
  // and at least one slot type appears in two or more domains.
  std::map<std::string, int> slot_domain_count;
  for (const auto& d : gen.domains) {
    std::set<std::string> declared(d.slot_types.begin(), d.slot_types.end());
    for (const std::string& s : d.slot_types) {
      ++slot_domain_count[s];
      auto eit = gen.entities.find(s);
      if (eit == gen.entities.end() || eit->second.empty()) {
        throw DataError("generator: slot " + s + " of domain " + d.name + " has no entities");
      }
    }
    for (const std::string& tmpl : d.templates) {
      for (const std::string& tok : split_words(tmpl)) {
        if (is_placeholder(tok) && declared.count(placeholder_name(tok)) == 0) {
          throw DataError("generator: template of domain " + d.name +
                          " references undeclared slot type " + placeholder_name(tok));
        }
      }
    }
  }
  bool shared = false;
  for (const auto& [_, count] : slot_domain_count) {
    if (count >= 2) shared = true;
  }
  if (!shared) throw DataError("generator: no slot type is shared across domains");
  return gen;
}

GeneratorConfig load_generator_config(const std::string& path) {
  return parse_generator_config(parse_config_file(path));
}

Corpus generate_synthetic_corpus(const GeneratorConfig& gen, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "gen");
  Corpus corpus;

  std::vector<GeneratorConfig::Domain> domains = gen.domains;
  std::sort(domains.begin(), domains.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });

  for (const auto& domain : domains) {
    for (int i = 0; i < gen.samples_per_domain; ++i) {
      const std::string& tmpl = domain.templates[rng.uniform_int(domain.templates.size())];
      Utterance utt;
      utt.domain = domain.name;
      for (const std::string& tok : split_words(tmpl)) {
        if (is_placeholder(tok)) {
          const std::string slot = placeholder_name(tok);
          const auto& phrases = gen.entities.at(slot);
          const Phrase& phrase = phrases[rng.uniform_int(phrases.size())];
          int start = static_cast<int>(utt.words.size());
          utt.words.insert(utt.words.end(), phrase.begin(), phrase.end());
          utt.spans.push_back(SlotSpan{slot, start, static_cast<int>(utt.words.size())});
        } else {
          utt.words.push_back(tok);
        }
      }
      corpus.add(std::move(utt));
    }
  }
  return corpus;
}

}  // namespace slotmoco

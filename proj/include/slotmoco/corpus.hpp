#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slotmoco/common.hpp"
#include "slotmoco/config_file.hpp"

namespace slotmoco {

// Half-open word-index span [start, end) carrying its slot type.
struct SlotSpan {
  std::string slot_type;
  int start = 0;
  int end = 0;

  friend bool operator==(const SlotSpan&, const SlotSpan&) = default;
};

struct Utterance {
  std::string domain;
  std::vector<std::string> words;
  std::vector<SlotSpan> spans;  // kept sorted by start, non-overlapping
};

// One (slot type, utterance) model input with its BIO labels for exactly the
// spans of the queried type.
struct QueryInstance {
  std::string slot_type;
  const Utterance* utterance = nullptr;
  std::vector<Label> labels;
};

using Phrase = std::vector<std::string>;

class Corpus {
 public:
  void add(Utterance utt);

  // Domains in sorted order.
  std::vector<std::string> domains() const;
  bool has_domain(const std::string& domain) const;
  const std::vector<Utterance>& samples(const std::string& domain) const;
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  // domain -> sorted slot types observed in that domain's samples
  const std::map<std::string, std::set<std::string>>& domain_slot_types() const { return domain_slots_; }
  std::vector<std::string> slot_types_of(const std::string& domain) const;
  // All slot types across domains, sorted.
  std::vector<std::string> all_slot_types() const;

  // slot type -> distinct span texts observed, sorted
  const std::map<std::string, std::set<Phrase>>& lexicon() const { return lexicon_; }

 private:
  std::map<std::string, std::vector<Utterance>> by_domain_;
  std::map<std::string, std::set<std::string>> domain_slots_;
  std::map<std::string, std::set<Phrase>> lexicon_;
  std::size_t size_ = 0;
};

// Block-per-utterance text format: `# domain=<name>` header, then one
// `<word>\t<tag>` line per word, blocks separated by a blank line.
Corpus load_corpus(const std::string& path);
Corpus parse_corpus_text(const std::string& text, const std::string& origin);
std::string corpus_to_text(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::string& path);

struct SplitSpec {
  std::string target_domain;
  int few_shot_k = 0;
  int dev_size = 500;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Corpus train;
  Corpus dev;
  Corpus test;
};

SplitResult leave_one_out_split(const Corpus& corpus, const SplitSpec& spec);

// One QueryInstance per slot type, in sorted slot-type order.
std::vector<QueryInstance> expand_queries(const Utterance& utt, const std::set<std::string>& slot_types);
std::vector<Label> bio_labels_for(const Utterance& utt, const std::string& slot_type);

// Synthetic corpus generation. Templates are word sequences where `[name]`
// marks a slot placeholder.
struct GeneratorConfig {
  struct Domain {
    std::string name;
    std::vector<std::string> slot_types;
    std::vector<std::string> templates;
  };
  int samples_per_domain = 100;
  std::vector<Domain> domains;
  std::map<std::string, std::vector<Phrase>> entities;
};

GeneratorConfig parse_generator_config(const ConfigMap& cfg);
GeneratorConfig load_generator_config(const std::string& path);
Corpus generate_synthetic_corpus(const GeneratorConfig& gen, std::uint64_t seed);

}  // namespace slotmoco

#include "slotmoco/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace slotmoco {

namespace {
const char* kReserved[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
}

Vocab::Vocab() {
  for (const char* t : kReserved) add(t);
}

void Vocab::add(const std::string& token) {
  if (ids_.count(token)) return;
  ids_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const { return ids_.count(token) != 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("vocab id out of range: " + std::to_string(id));
  return tokens_[id];
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> slot_type_tokens(const std::string& slot_type) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : slot_type) {
    if (c == '_') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocab Vocab::build(const Corpus& corpus, int min_freq) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");
  std::map<std::string, std::int64_t> freq;
  for (const std::string& domain : corpus.domains()) {
    for (const Utterance& utt : corpus.samples(domain)) {
      for (const std::string& w : utt.words) ++freq[lowercase(w)];
    }
  }

  // Slot-type name words are always kept: template samples lexicalize them
  // into utterances, so they must be encodable.
  std::map<std::string, std::int64_t> keep;
  for (const auto& [word, count] : freq) {
    if (count >= min_freq) keep[word] = count;
  }
  for (const std::string& t : corpus.all_slot_types()) {
    for (const std::string& w : slot_type_tokens(t)) {
      auto it = freq.find(w);
      keep[w] = it == freq.end() ? 0 : it->second;
    }
  }

  // Ids assigned by descending frequency, ties lexicographic.
  std::vector<std::pair<std::string, std::int64_t>> order(keep.begin(), keep.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab vocab;
  for (const auto& [word, _] : order) vocab.add(word);
  return vocab;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocab file: " + path);
  for (int i = 0; i < size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocab file: " + path);
  Vocab vocab;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ": line " + std::to_string(lineno) + ": expected <token>\\t<id>");
    }
    std::string token = line.substr(0, tab);
    int id = std::stoi(line.substr(tab + 1));
    if (id != lineno - 1) {
      throw DataError(path + ": line " + std::to_string(lineno) + ": ids must be dense and sorted");
    }
    if (id >= 4) {
      vocab.add(token);
    } else if (token != kReserved[id]) {
      throw DataError(path + ": reserved id " + std::to_string(id) + " remapped to " + token);
    }
  }
  return vocab;
}

EncodedQuery encode_query(const Vocab& vocab, const std::string& slot_type,
                          const std::vector<std::string>& words, int max_len) {
  if (words.empty()) throw DataError("encode_query: empty utterance");
  EncodedQuery q;
  q.token_ids.push_back(Vocab::kCls);
  q.segment_ids.push_back(0);
  for (const std::string& t : slot_type_tokens(lowercase(slot_type))) {
    q.token_ids.push_back(vocab.id(t));
    q.segment_ids.push_back(0);
  }
  q.token_ids.push_back(Vocab::kSep);
  q.segment_ids.push_back(0);
  for (const std::string& w : words) {
    q.utterance_positions.push_back(static_cast<int>(q.token_ids.size()));
    q.token_ids.push_back(vocab.id(lowercase(w)));
    q.segment_ids.push_back(1);
  }
  q.token_ids.push_back(Vocab::kSep);
  q.segment_ids.push_back(1);
  if (max_len > 0 && static_cast<int>(q.token_ids.size()) > max_len) {
    throw DataError("encoded query length " + std::to_string(q.token_ids.size()) +
                    " exceeds max_len " + std::to_string(max_len));
  }
  return q;
}

}  // namespace slotmoco

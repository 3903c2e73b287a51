#pragma once

#include <map>
#include <string>
#include <vector>

#include "slotmoco/corpus.hpp"

namespace slotmoco {

// Word-level vocabulary with the four reserved tokens at fixed ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  Vocab();

  static Vocab build(const Corpus& corpus, int min_freq);

  int id(const std::string& token) const;  // kUnk for unknown tokens
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

struct EncodedQuery {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;          // 0 through first [SEP], 1 after
  std::vector<int> utterance_positions;  // indices of the n utterance words
};

// Slot type names are lexicalized by splitting on '_'.
std::vector<std::string> slot_type_tokens(const std::string& slot_type);
std::string lowercase(const std::string& s);

// Layout: [CLS] <slot-type tokens> [SEP] <words> [SEP]. A positive max_len
// bounds the encoded length.
EncodedQuery encode_query(const Vocab& vocab, const std::string& slot_type,
                          const std::vector<std::string>& words, int max_len = 0);

}  // namespace slotmoco

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace smem {

// Lowercase, whitespace-split, leading/trailing ASCII punctuation stripped.
std::vector<std::string> tokenize(const std::string& text);

// Normalized form used for answer matching: tokenized and re-joined.
std::string normalize_answer(const std::string& text);

// Question-token and answer-class maps. Token ids are dense 0..|V|-1 in
// first-appearance order; padding is the out-of-band id -1 and never a
// vocabulary entry. Immutable after build.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, std::vector<std::string> answers, int min_freq, int top_k_answers);

  int size() const { return static_cast<int>(tokens_.size()); }
  int num_classes() const { return static_cast<int>(answers_.size()); }
  int min_freq() const { return min_freq_; }
  int top_k_answers() const { return top_k_answers_; }

  std::optional<int> token_id(const std::string& token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<int> answer_class(const std::string& answer) const;
  const std::string& answer(int cls) const;
  const std::vector<std::string>& answers() const { return answers_; }

  // FNV-1a over tokens, answers and thresholds; pinned into checkpoints.
  uint64_t hash() const;

  std::string to_json() const;
  static Vocabulary from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> answers_;
  std::unordered_map<std::string, int> token_to_id_;
  std::unordered_map<std::string, int> answer_to_class_;
  int min_freq_ = 1;
  int top_k_answers_ = 1000;
};

// Question tokens with frequency >= min_freq keep their first-appearance
// order; answers are ranked by frequency (ties lexicographic) and truncated
// to top_k. Samples whose answer misses the cut are excluded by the caller
// via Vocabulary::answer_class.
Vocabulary build_vocab(const std::vector<std::pair<std::string, std::string>>& qa_corpus, int min_freq,
                       int top_k_answers);

// Fixed-capacity encoded question: real ids then -1 padding.
struct EncodedQuestion {
  std::vector<int> ids;        // length T; >=0 real, -1 padding
  std::vector<uint8_t> mask;   // true where real
  std::string raw_text;
  bool truncated = false;

  int real_len() const {
    int n = 0;
    for (uint8_t m : mask) n += m ? 1 : 0;
    return n;
  }
};

// OOV tokens are dropped; zero surviving tokens is an empty-question error;
// more than capacity real tokens are truncated with the flag set.
EncodedQuestion encode_question(const std::string& question, const Vocabulary& vocab, int capacity);

// Real tokens of an encoded question, in order.
std::vector<std::string> decode_question(const EncodedQuestion& q, const Vocabulary& vocab);

}  // namespace smem

#include "smem/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "smem/error.hpp"

namespace smem {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string word;
  while (is >> word) {
    size_t begin = 0, end = word.size();
    while (begin < end && std::ispunct(static_cast<unsigned char>(word[begin]))) ++begin;
    while (end > begin && std::ispunct(static_cast<unsigned char>(word[end - 1]))) --end;
    if (begin == end) continue;
    std::string tok = word.substr(begin, end - begin);
    for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(tok));
  }
  return out;
}

std::string normalize_answer(const std::string& text) {
  std::string out;
  for (const std::string& tok : tokenize(text)) {
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::string> answers, int min_freq,
                       int top_k_answers)
    : tokens_(std::move(tokens)), answers_(std::move(answers)), min_freq_(min_freq), top_k_answers_(top_k_answers) {
  for (size_t i = 0; i < tokens_.size(); ++i) token_to_id_[tokens_[i]] = static_cast<int>(i);
  for (size_t i = 0; i < answers_.size(); ++i) answer_to_class_[answers_[i]] = static_cast<int>(i);
  if (token_to_id_.size() != tokens_.size() || answer_to_class_.size() != answers_.size())
    fail(ErrorKind::kData, "vocabulary contains duplicate entries");
}

std::optional<int> Vocabulary::token_id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) fail(ErrorKind::kUsage, "token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

std::optional<int> Vocabulary::answer_class(const std::string& answer) const {
  auto it = answer_to_class_.find(normalize_answer(answer));
  if (it == answer_to_class_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::answer(int cls) const {
  if (cls < 0 || cls >= num_classes()) fail(ErrorKind::kUsage, "answer class " + std::to_string(cls) + " out of range");
  return answers_[static_cast<size_t>(cls)];
}

uint64_t Vocabulary::hash() const {
  uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0x1f;
    h *= 1099511628211ULL;
  };
  for (const auto& t : tokens_) mix(t);
  h ^= 0x1e;
  h *= 1099511628211ULL;
  for (const auto& a : answers_) mix(a);
  mix(std::to_string(min_freq_));
  mix(std::to_string(top_k_answers_));
  return h;
}

std::string Vocabulary::to_json() const {
  nlohmann::json j;
  j["tokens"] = tokens_;
  j["answers"] = answers_;
  j["min_freq"] = min_freq_;
  j["top_k_answers"] = top_k_answers_;
  return j.dump(2) + "\n";
}

Vocabulary Vocabulary::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("vocabulary json: ") + e.what());
  }
  return Vocabulary(j.at("tokens").get<std::vector<std::string>>(),
                    j.at("answers").get<std::vector<std::string>>(), j.at("min_freq").get<int>(),
                    j.at("top_k_answers").get<int>());
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write vocabulary to " + path.string());
  out << to_json();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read vocabulary from " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

Vocabulary build_vocab(const std::vector<std::pair<std::string, std::string>>& qa_corpus, int min_freq,
                       int top_k_answers) {
  if (qa_corpus.empty()) fail(ErrorKind::kUsage, "build_vocab: empty corpus");
  if (min_freq < 1 || top_k_answers < 1) fail(ErrorKind::kUsage, "build_vocab: thresholds must be >= 1");

  std::vector<std::string> order;
  std::unordered_map<std::string, int> freq;
  std::map<std::string, int> answer_freq;  // ordered map gives the lexicographic tiebreak
  for (const auto& [question, answer] : qa_corpus) {
    for (const std::string& tok : tokenize(question)) {
      if (freq.emplace(tok, 0).second) order.push_back(tok);
      ++freq[tok];
    }
    ++answer_freq[normalize_answer(answer)];
  }

  std::vector<std::string> tokens;
  for (const std::string& tok : order)
    if (freq[tok] >= min_freq) tokens.push_back(tok);

  std::vector<std::pair<std::string, int>> ranked(answer_freq.begin(), answer_freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> answers;
  for (const auto& [ans, n] : ranked) {
    if (static_cast<int>(answers.size()) >= top_k_answers) break;
    answers.push_back(ans);
  }
  return Vocabulary(std::move(tokens), std::move(answers), min_freq, top_k_answers);
}

EncodedQuestion encode_question(const std::string& question, const Vocabulary& vocab, int capacity) {
  if (capacity < 1) fail(ErrorKind::kUsage, "encode_question: capacity must be >= 1");
  EncodedQuestion q;
  q.raw_text = question;
  std::vector<int> real;
  for (const std::string& tok : tokenize(question)) {
    auto id = vocab.token_id(tok);
    if (id) real.push_back(*id);  // OOV tokens are dropped
  }
  if (real.empty()) fail(ErrorKind::kEmptyQuestion, "encode_question: no in-vocabulary tokens in \"" + question + "\"");
  if (static_cast<int>(real.size()) > capacity) {
    real.resize(static_cast<size_t>(capacity));
    q.truncated = true;
  }
  q.ids.assign(static_cast<size_t>(capacity), -1);
  q.mask.assign(static_cast<size_t>(capacity), 0);
  for (size_t j = 0; j < real.size(); ++j) {
    q.ids[j] = real[j];
    q.mask[j] = 1;
  }
  return q;
}

std::vector<std::string> decode_question(const EncodedQuestion& q, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (size_t j = 0; j < q.ids.size(); ++j)
    if (q.mask[j]) out.push_back(vocab.token(q.ids[j]));
  return out;
}

}  // namespace smem

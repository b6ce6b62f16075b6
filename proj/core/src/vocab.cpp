#include "embnmt/vocab.hpp"

#include <algorithm>
#include <fstream>

#include "embnmt/errors.hpp"

namespace embnmt {

namespace {
const std::vector<std::string> kSpecialWords = {"<pad>", std::string(kUnkSurface), "<s>", "</s>"};
}

Vocabulary::Vocabulary() : words_(kSpecialWords) {
  for (std::size_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], static_cast<WordId>(i));
}

Vocabulary::Vocabulary(std::vector<std::string> words) : Vocabulary() {
  words_.reserve(words_.size() + words.size());
  for (auto& w : words) {
    if (w.empty()) throw ContractViolation("vocabulary word must be non-empty");
    if (!ids_.emplace(w, static_cast<WordId>(words_.size())).second) {
      throw ContractViolation("duplicate vocabulary word '" + w + "'");
    }
    words_.push_back(std::move(w));
  }
}

WordId Vocabulary::id_of(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return ids_.count(std::string(word)) != 0; }

const std::string& Vocabulary::word_of(WordId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw std::out_of_range("word id " + std::to_string(id) + " out of range for vocabulary of size " +
                            std::to_string(words_.size()));
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<WordId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<WordId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

Sentence Vocabulary::decode_ids(std::span<const WordId> ids) const {
  Sentence out;
  for (WordId id : ids) {
    const std::string& w = word_of(id);
    if (id == kPad || id == kBos || id == kEos) continue;
    out.push_back(w);
  }
  return out;
}

std::vector<std::string> Vocabulary::corpus_words() const {
  return {words_.begin() + kNumSpecials, words_.end()};
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (std::size_t i = kNumSpecials; i < words_.size(); ++i) out << words_[i] << '\n';
  if (!out) throw IoError("failed writing vocabulary " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  std::vector<std::string> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.find_first_of(" \t") != std::string::npos) {
      throw FormatError("malformed vocabulary entry '" + line + "'", lineno);
    }
    words.push_back(line);
  }
  return Vocabulary(std::move(words));
}

Vocabulary build_vocab(std::span<const Sentence> sentences, std::size_t max_size) {
  if (max_size < static_cast<std::size_t>(kNumSpecials) + 1) {
    throw ContractViolation("vocabulary max_size must be at least 5, got " + std::to_string(max_size));
  }
  struct Entry {
    std::string word;
    std::size_t count;
    std::size_t first_seen;
  };
  std::vector<Entry> entries;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& s : sentences) {
    for (const auto& w : s) {
      auto [it, inserted] = slot.try_emplace(w, entries.size());
      if (inserted) {
        entries.push_back({w, 0, entries.size()});
      }
      ++entries[it->second].count;
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.count != b.count ? a.count > b.count : a.first_seen < b.first_seen;
  });
  const std::size_t keep = std::min(entries.size(), max_size - kNumSpecials);
  std::vector<std::string> words;
  words.reserve(keep);
  Vocabulary specials;
  for (std::size_t i = 0; i < entries.size() && words.size() < keep; ++i) {
    // Corpus text that happens to spell a special token stays mapped to it.
    if (specials.contains(entries[i].word)) continue;
    words.push_back(entries[i].word);
  }
  return Vocabulary(std::move(words));
}

}  // namespace embnmt

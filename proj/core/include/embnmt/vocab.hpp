#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace embnmt {

using WordId = std::int32_t;
using Sentence = std::vector<std::string>;

inline constexpr WordId kPad = 0;
inline constexpr WordId kUnk = 1;
inline constexpr WordId kBos = 2;
inline constexpr WordId kEos = 3;
inline constexpr WordId kNumSpecials = 4;

inline constexpr std::string_view kUnkSurface = "<unk>";

inline bool is_special(WordId id) { return id >= 0 && id < kNumSpecials; }

// Word <-> id map. Ids 0..3 are PAD, UNK, BOS, EOS; corpus words follow densely.
class Vocabulary {
 public:
  Vocabulary();

  // Words are assigned ids 4, 5, ... in the given order. Duplicates are rejected.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }

  WordId id_of(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word_of(WordId id) const;

  std::vector<WordId> encode(std::span<const std::string> tokens) const;

  // UNK renders as "<unk>"; PAD, BOS and EOS are dropped.
  Sentence decode_ids(std::span<const WordId> ids) const;

  // One word per line, line number = id - 4. Specials are implicit.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  // Words with id >= 4, in id order.
  std::vector<std::string> corpus_words() const;

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> ids_;
};

// Keeps the (max_size - 4) most frequent words; ties go to the word seen first.
Vocabulary build_vocab(std::span<const Sentence> sentences, std::size_t max_size);

}  // namespace embnmt

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace asem {

class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kSos = 2;
    static constexpr int kEos = 3;

    Vocabulary();

    // Tokens with frequency >= min_freq enter the vocabulary, ordered by
    // frequency descending then lexicographic, after the reserved four.
    static Vocabulary build(const std::vector<std::vector<std::string>>& sequences, int min_freq);

    int size() const { return (int)id_to_token_.size(); }

    // UNK for unknown tokens.
    int encode(const std::string& token) const;
    std::vector<int> encode(const std::vector<std::string>& tokens) const;

    const std::string& decode(int id) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    bool contains(const std::string& token) const;

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    // Rebuild from an explicit token list (checkpoint load). The first four
    // entries must be the reserved tokens.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;

    void push(const std::string& token);
};

}  // namespace asem

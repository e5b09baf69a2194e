#include "asem/vocab.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace asem {

namespace {
const std::vector<std::string> kReserved = {"<pad>", "<unk>", "<sos>", "<eos>"};
}

Vocabulary::Vocabulary() {
    for (const auto& t : kReserved) push(t);
}

void Vocabulary::push(const std::string& token) {
    token_to_id_[token] = (int)id_to_token_.size();
    id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sequences,
                             int min_freq) {
    if (min_freq < 1) throw std::invalid_argument("min_freq must be >= 1");
    if (sequences.empty()) throw std::invalid_argument("empty corpus");
    std::map<std::string, long long> freq;  // ordered map gives the lexicographic tiebreak
    for (const auto& seq : sequences)
        for (const auto& tok : seq) ++freq[tok];
    std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [tok, n] : items) {
        if (n < min_freq) continue;
        if (v.token_to_id_.count(tok)) continue;  // a reserved literal in the text
        v.push(tok);
    }
    return v;
}

int Vocabulary::encode(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(encode(t));
    return ids;
}

const std::string& Vocabulary::decode(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
    return id_to_token_[(size_t)id];
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(decode(id));
    return out;
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < kReserved.size()) throw std::invalid_argument("vocab too small");
    for (size_t i = 0; i < kReserved.size(); ++i)
        if (tokens[i] != kReserved[i]) throw std::invalid_argument("reserved tokens corrupted");
    Vocabulary v;
    for (size_t i = kReserved.size(); i < tokens.size(); ++i) {
        if (v.token_to_id_.count(tokens[i]))
            throw std::invalid_argument("duplicate vocab token: " + tokens[i]);
        v.push(tokens[i]);
    }
    return v;
}

}  // namespace asem

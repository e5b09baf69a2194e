#pragma once

#include <string>
#include <vector>

namespace asem {

// Lowercase, split on whitespace, split punctuation runs off word edges so
// "great!" becomes {"great", "!"}. Matches the token inventory of common
// pretrained word vectors.
std::vector<std::string> tokenize(const std::string& text);

std::string join_tokens(const std::vector<std::string>& tokens);

std::string trim(const std::string& s);

}  // namespace asem

#include <cctype>

#include "densecap/text.hpp"

namespace densecap {

namespace {

bool is_word_byte(unsigned char ch) {
  return ch >= 0x80 || std::isalnum(ch) != 0;
}

bool is_placeholder_byte(unsigned char ch) {
  return std::isalnum(ch) != 0 || ch == '_';
}

}  // namespace

Tokens normalize_caption(std::string_view text) {
  Tokens tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };

  for (std::size_t i = 0; i < text.size();) {
    const auto ch = static_cast<unsigned char>(text[i]);
    if (ch == '[') {
      std::size_t end = i + 1;
      while (end < text.size() && is_placeholder_byte(static_cast<unsigned char>(text[end]))) {
        ++end;
      }
      if (end > i + 1 && end < text.size() && text[end] == ']') {
        flush();
        std::string tok(text.substr(i, end - i + 1));
        for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        tokens.push_back(std::move(tok));
        i = end + 1;
        continue;
      }
    }
    if (is_word_byte(ch)) {
      current.push_back(ch < 0x80 ? static_cast<char>(std::tolower(ch)) : static_cast<char>(ch));
    } else {
      flush();
    }
    ++i;
  }
  flush();
  return tokens;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace densecap

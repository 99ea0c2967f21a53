#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace densecap {

using Tokens = std::vector<std::string>;

/// Lowercases ASCII letters, turns ASCII punctuation into token boundaries and
/// splits on whitespace. Bracketed placeholders such as "[PLAYER]" survive as
/// one token ("[player]"). Non-ASCII bytes are kept as word characters.
Tokens normalize_caption(std::string_view text);

std::string join_tokens(const Tokens& tokens);

/// Porter (1980) suffix stripper, reference C implementation rules
/// (including the "bli"->"ble" and "logi"->"log" departures). Tokens that are
/// not plain lowercase ASCII words, such as placeholders, are returned as is.
std::string porter_stem(std::string_view word);

}  // namespace densecap

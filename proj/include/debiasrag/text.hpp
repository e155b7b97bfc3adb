#ifndef DEBIASRAG_TEXT_HPP
#define DEBIASRAG_TEXT_HPP

#include <string>
#include <vector>

namespace debiasrag {

// Shared deterministic tokenization: lowercase, split on non-alphanumerics,
// drop empty tokens. Bytes >= 0x80 are kept as word characters so UTF-8
// sequences stay intact.
std::vector<std::string> tokenize(const std::string& text);

// Same split points as tokenize() but original casing is preserved.
std::vector<std::string> split_preserve_case(const std::string& text);

std::string to_lower(const std::string& s);

// Copies the leading-capital pattern of `original` onto `replacement`
// ("He" + "she" -> "She").
std::string match_case(const std::string& original, const std::string& replacement);

// Joins tokens with single spaces.
std::string join_tokens(const std::vector<std::string>& tokens);

} // namespace debiasrag

#endif

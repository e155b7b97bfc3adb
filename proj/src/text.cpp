#include "debiasrag/text.hpp"

#include <cctype>

namespace debiasrag {

namespace {

bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c >= 0x80;
}

std::vector<std::string> split_impl(const std::string& text, bool lowercase) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (is_word_byte(c)) {
            cur.push_back(lowercase ? static_cast<char>(std::tolower(c))
                                    : static_cast<char>(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

} // namespace

std::vector<std::string> tokenize(const std::string& text) {
    return split_impl(text, /*lowercase=*/true);
}

std::vector<std::string> split_preserve_case(const std::string& text) {
    return split_impl(text, /*lowercase=*/false);
}

std::string to_lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string match_case(const std::string& original, const std::string& replacement) {
    if (original.empty() || replacement.empty()) return replacement;
    if (std::isupper(static_cast<unsigned char>(original[0]))) {
        std::string out = replacement;
        out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
        return out;
    }
    return replacement;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

} // namespace debiasrag

#include "tutorloop/readability.hpp"

#include "tutorloop/errors.hpp"

#include <cctype>
#include <string>

namespace tutorloop::metrics {

namespace {

bool is_vowel(char c) {
    switch (c) {
        case 'a': case 'e': case 'i': case 'o': case 'u': case 'y': return true;
        default: return false;
    }
}

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

}  // namespace

int count_syllables(std::string_view word) {
    std::string letters;
    for (char c : word) {
        if (is_alpha(c)) letters.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (letters.empty()) return 1;

    int groups = 0;
    bool in_group = false;
    for (char c : letters) {
        const bool v = is_vowel(c);
        if (v && !in_group) ++groups;
        in_group = v;
    }

    const std::size_t n = letters.size();
    if (letters[n - 1] == 'e') {
        const bool consonant_le = n >= 3 && letters[n - 2] == 'l' && !is_vowel(letters[n - 3]);
        if (!consonant_le) --groups;
    }
    return groups < 1 ? 1 : groups;
}

TextStats count_text_stats(std::string_view text) {
    TextStats stats;
    bool open_sentence = false;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (start == i) break;
        const std::string_view token = text.substr(start, i - start);

        bool has_word_char = false;
        for (char c : token) has_word_char = has_word_char || is_alnum(c);
        if (has_word_char) {
            ++stats.words;
            stats.syllables += count_syllables(token);
            open_sentence = true;
        }
        // Closing quotes and brackets may trail the terminator.
        std::size_t end = token.size();
        while (end > 0 && (token[end - 1] == '"' || token[end - 1] == '\'' ||
                           token[end - 1] == ')' || token[end - 1] == ']')) {
            --end;
        }
        if (end > 0 && is_terminator(token[end - 1]) && open_sentence) {
            ++stats.sentences;
            open_sentence = false;
        }
    }
    if (open_sentence) ++stats.sentences;
    if (stats.words == 0) throw EmptyText("text has no words");
    return stats;
}

double fkgl(const TextStats& stats) {
    if (stats.words < 1 || stats.sentences < 1) {
        throw ZeroDenominator("grade level needs at least one word and one sentence");
    }
    const double words = stats.words;
    return 0.39 * (words / stats.sentences) + 11.8 * (stats.syllables / words) - 15.59;
}

int readability_label(double fkgl_value) { return fkgl_value < 9.0 ? 1 : 0; }

}  // namespace tutorloop::metrics

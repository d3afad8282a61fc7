#pragma once

#include <string_view>

namespace tutorloop::metrics {

struct TextStats {
    int words = 0;
    int sentences = 0;
    int syllables = 0;

    bool operator==(const TextStats&) const = default;
};

// Lowercase, count maximal vowel groups over [aeiouy], drop one for a silent
// terminal "e" (but not consonant + "le"), never below 1.
int count_syllables(std::string_view word);

// Words are whitespace-delimited tokens holding at least one letter or digit.
// A sentence closes at a token ending in . ! or ?; a trailing unterminated
// run counts as one sentence.
TextStats count_text_stats(std::string_view text);

// Flesch-Kincaid grade level.
double fkgl(const TextStats& stats);

// 1 when the grade level is strictly below 9, else 0.
int readability_label(double fkgl_value);

}  // namespace tutorloop::metrics

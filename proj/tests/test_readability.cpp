#include "tutorloop/errors.hpp"
#include "tutorloop/readability.hpp"

#include <gtest/gtest.h>

using namespace tutorloop;
using namespace tutorloop::metrics;

TEST(Syllables, Heuristic) {
    EXPECT_EQ(count_syllables("cat"), 1);
    EXPECT_EQ(count_syllables("make"), 1);     // silent e
    EXPECT_EQ(count_syllables("table"), 2);    // consonant + le keeps its e
    EXPECT_EQ(count_syllables("the"), 1);      // floor of one
    EXPECT_EQ(count_syllables("Energy,"), 3);  // y is a vowel, punctuation ignored
    EXPECT_EQ(count_syllables("absorbs"), 2);
    EXPECT_EQ(count_syllables("90%"), 1);
}

TEST(TextStats, HandCountedSentences) {
    EXPECT_EQ(count_text_stats("The cat sat."), (TextStats{3, 1, 3}));
    EXPECT_EQ(count_text_stats("Great job! Keep going."), (TextStats{4, 2, 4}));
    EXPECT_EQ(count_text_stats("No terminator here"), (TextStats{3, 1, 6}));
    EXPECT_EQ(count_text_stats("He said \"stop.\" Then left."), (TextStats{5, 2, 5}));
}

TEST(TextStats, BlankTextIsAnError) {
    EXPECT_THROW(count_text_stats("   "), EmptyText);
    EXPECT_THROW(count_text_stats("... !!"), EmptyText);
}

TEST(Fkgl, HandAppliedFormula) {
    EXPECT_NEAR(fkgl({6, 1, 17}), 0.39 * 6 + 11.8 * (17.0 / 6.0) - 15.59, 1e-12);
    EXPECT_NEAR(fkgl({6, 1, 17}), 20.183333333333333, 1e-9);
    EXPECT_NEAR(fkgl({9, 2, 9}), -2.035, 1e-9);
    EXPECT_NEAR(fkgl({1, 1, 1}), -3.4, 1e-9);
    EXPECT_THROW(fkgl({0, 0, 0}), ZeroDenominator);
}

TEST(Fkgl, MonotoneInWordAndSyllableRatios) {
    for (int words = 1; words < 60; ++words) {
        for (int sentences = 1; sentences <= words; sentences += 3) {
            const double base = fkgl({words, sentences, words});
            EXPECT_LT(base, fkgl({words, sentences, words + 1}));
            EXPECT_LT(base, fkgl({words + 1, sentences, words + 1}) + 1e-12);
            if (sentences > 1) {
                EXPECT_LT(fkgl({words, sentences, words}), fkgl({words, sentences - 1, words}));
            }
        }
    }
}

TEST(ReadabilityLabel, StrictBoundaryAtNine) {
    EXPECT_EQ(readability_label(6.7), 1);
    EXPECT_EQ(readability_label(8.999999), 1);
    EXPECT_EQ(readability_label(9.0), 0);
    EXPECT_EQ(readability_label(20.18), 0);
    EXPECT_EQ(readability_label(fkgl({6, 1, 17})), 0);
}

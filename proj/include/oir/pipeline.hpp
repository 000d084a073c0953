#pragma once

// Dataset-wide feature extraction: prosodic and linguistic tables for a set
// of target segments, with the dialogue context each extractor needs.

#include <vector>

#include "oir/audio.hpp"
#include "oir/corpus.hpp"
#include "oir/features.hpp"
#include "oir/linguistic.hpp"

namespace oir::pipeline {

// Prosodic vectors (canonical column order) for `targets`, computed in
// parallel over dialogues. The result does not depend on `threads`.
FeatureTable extract_prosody_table(const corpus::Dataset& ds, audio::AudioSource& audio,
                                   const std::vector<std::size_t>& targets, int threads = 1);

FeatureTable extract_linguistic_table(const corpus::Dataset& ds, const linguistic::BigramVocabulary& vocab,
                                      const std::vector<std::size_t>& targets);

// Fills absent cells with the mean of the same speaker's present values on
// earlier rows of the same dialogue. Cells stay marked absent; cells with no
// such history stay NaN for train-mean imputation downstream.
void impute_speaker_baseline(FeatureTable& table, const corpus::Dataset& ds);

}  // namespace oir::pipeline

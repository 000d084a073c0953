#pragma once

// Synthetic OIR dialogues with planted cues and rendered audio, for tests
// and end-to-end runs without the annotated corpus.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "oir/audio.hpp"
#include "oir/corpus.hpp"

namespace oir::synth {

struct SynthOptions {
  std::size_t n_dialogues = 10;
  double ri_fraction = 0.3;  // approximate RI share of the RI+RD segments
  double noise_level = 0.0;  // probability of dropping each cue family, plus signal jitter
  std::uint64_t seed = 0;
  std::size_t turns_per_dialogue = 12;
  std::size_t hard_ri = 0;   // RIs with every cue removed
  int sample_rate = 16000;
};

// Which cue families an RI carries. Lexical: "wat" and a final "?";
// prosodic: raised pitch with a final rise; repetition: a noun phrase
// copied from the prior turn.
struct PlantedCues {
  bool lexical = false;
  bool prosodic = false;
  bool repetition = false;
};

struct SynthCorpus {
  corpus::Dataset dataset;
  std::map<std::string, audio::WavData> audio;  // keyed by audio_ref.path
  std::map<std::string, PlantedCues> cues;      // per RI segment id
  std::vector<std::string> hard_ri_ids;
};

// Throws BadConfig unless 0 < ri_fraction < 1 and 0 <= noise_level <= 1.
SynthCorpus synth_corpus(const SynthOptions& opt);

// corpus.jsonl plus audio/<dialogue>.wav under dir.
void write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir);

// Hands the corpus audio to an AudioSource so no disk I/O is needed.
// corpus.audio is left empty.
void register_audio(SynthCorpus& corpus, audio::AudioSource& source);

}  // namespace oir::synth

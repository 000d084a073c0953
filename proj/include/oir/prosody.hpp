#pragma once

// Prosodic feature extraction: pitch, intensity, voice quality, pauses,
// speech timing, word-level prosody, speaker baselines and cross-segment
// transitions.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oir/audio.hpp"
#include "oir/corpus.hpp"
#include "oir/features.hpp"

namespace oir::prosody {

using audio::AudioBuffer;

inline constexpr double kUnvoiced = 0.0;
inline constexpr double kDefaultFloor = 60.0;
inline constexpr double kDefaultCeiling = 500.0;
inline constexpr double kSemitoneRef = 100.0;

struct PitchParams {
  double hop = 0.010;
  double window = 0.040;
  double voicing_threshold = 0.45;
  // Frames whose peak amplitude is below this fraction of the buffer's peak
  // are silent.
  double silence_threshold = 0.03;
  int median_width = 5;
  double outlier_robust_std = 2.5;
};

struct PitchTrack {
  std::vector<double> frame_times;
  std::vector<double> f0;        // Hz, kUnvoiced where unvoiced
  std::vector<bool> voiced;
  std::vector<double> strength;  // normalized autocorrelation peak per frame
  double floor = kDefaultFloor;
  double ceiling = kDefaultCeiling;

  std::size_t size() const { return f0.size(); }
  std::size_t voiced_count() const;
};

// Autocorrelation pitch tracker (Hann window, window-normalized ACF,
// parabolic peak interpolation) with median smoothing and robust outlier
// rejection. Throws AudioTooShort when the buffer holds fewer than two
// analysis windows.
PitchTrack track_pitch(const AudioBuffer& audio, double floor = kDefaultFloor,
                       double ceiling = kDefaultCeiling, const PitchParams& params = {});

// Speaker-adaptive range from a first pass: (max(60, 0.75 q25), min(500, 1.5 q75)).
std::pair<double, double> adapt_pitch_range(const PitchTrack& track);

// First pass at 60-500 Hz, second pass at the adapted range when enough
// frames are voiced.
PitchTrack track_pitch_adaptive(const AudioBuffer& audio, const PitchParams& params = {});

double hz_to_semitones(double f, double ref = kSemitoneRef);

FeatureVector pitch_stats(const PitchTrack& track);

struct IntensityTrack {
  std::vector<double> frame_times;
  std::vector<double> db;
  double window = 0.030;
  double hop = 0.010;

  std::size_t size() const { return db.size(); }
  double max_db() const;
};

// RMS energy in dB re 2e-5 full-scale units, floored so digital silence is 0 dB.
IntensityTrack intensity_track(const AudioBuffer& audio);
FeatureVector intensity_stats(const IntensityTrack& track);
std::pair<IntensityTrack, FeatureVector> intensity_features(const AudioBuffer& audio);

struct VoiceQuality {
  double jitter = 0.0;   // %
  double shimmer = 0.0;  // %
  double hnr = 0.0;      // dB
};

VoiceQuality voice_quality(const AudioBuffer& audio, const PitchTrack& track);

enum class PauseCategory { Short, Medium, Long };
enum class PausePosition { Initial, Medial, Final };

struct Pause {
  double start = 0.0;
  double end = 0.0;
  double duration = 0.0;
  PauseCategory category = PauseCategory::Short;
  PausePosition position = PausePosition::Initial;
};

PauseCategory categorize_pause(double duration);

struct PauseAnalysis {
  std::vector<Pause> pauses;
  FeatureVector features;
  double total = 0.0;
};

PauseAnalysis detect_pauses(const IntensityTrack& track, double segment_duration);

// Intensity peaks of at least 2 dB prominence over voiced, non-silent frames.
std::vector<std::size_t> syllable_nuclei(const IntensityTrack& intensity, const PitchTrack& pitch);

struct SpeechTiming {
  double duration = 0.0;
  double speech_rate = 0.0;
  std::optional<double> articulation_rate;  // nullopt when no time remains after pauses
  std::size_t nuclei = 0;
};

SpeechTiming speech_timing(double duration, std::span<const Pause> pauses, std::size_t nuclei);
SpeechTiming speech_timing(const corpus::Segment& seg, std::span<const Pause> pauses,
                           const AudioBuffer& audio);

// Pitch (semitones re 100 Hz) and intensity over the spans of the given
// tokens and of any token with lemma "wat". `audio` starts at seg.t_start.
FeatureVector word_level_prosody(const corpus::Segment& seg, std::span<const std::size_t> repeated_words,
                                 const PitchTrack& pitch, const IntensityTrack& intensity);
FeatureVector word_level_prosody(const corpus::Segment& seg, std::span<const std::size_t> repeated_words,
                                 const AudioBuffer& audio);

// Segment-level summary that feeds speaker baselines.
struct SegmentSummary {
  std::string segment_id;
  std::string speaker;
  double t_start = 0.0;
  double t_end = 0.0;
  std::optional<double> pitch_mean;      // Hz
  std::optional<double> intensity_mean;  // dB
};

struct ChannelStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
};

struct SpeakerBaseline {
  std::string speaker;
  std::optional<ChannelStats> pitch;
  std::optional<ChannelStats> intensity;
  std::size_t n_segments = 0;
};

// Built from `history` entries of the target's speaker that end no later
// than the target starts. Throws NoHistory when there are none.
SpeakerBaseline speaker_baseline(std::span<const SegmentSummary> history, const SegmentSummary& target);

enum class Channel { Pitch, Intensity };

struct Normalized {
  double z_score = 0.0;
  double rel_change = 0.0;  // %
  double range_pos = 0.5;
};

Normalized normalize_to_baseline(double value, const ChannelStats& stats);
// Throws NoHistory when the baseline lacks the channel.
Normalized normalize_to_baseline(double value, const SpeakerBaseline& baseline, Channel channel);

// Least-squares slopes over the first / last `edge` seconds of voiced
// (pitch, st/s) or non-silent (intensity, dB/s) frames.
struct BoundarySlopes {
  std::optional<double> pitch_start;
  std::optional<double> pitch_end;
  std::optional<double> intensity_start;
  std::optional<double> intensity_end;
};

BoundarySlopes boundary_slopes(const PitchTrack& pitch, const IntensityTrack& intensity, double edge = 0.3);

struct Transition {
  std::optional<double> end_slope;    // previous segment
  std::optional<double> start_slope;  // following segment
  std::optional<double> transition;   // start_slope - end_slope
};

Transition slope_transition(std::optional<double> end_slope_prev, std::optional<double> start_slope_cur);

struct Latency {
  double ts_ri = 0.0;
  std::optional<double> ri_rs;
};

// Gap from the last TS end to the first RI start (and RI to RS). Negative
// values mean overlap. Throws MissingComponent without TS or RI.
Latency latency(const corpus::OirSequence& seq, const corpus::Dataset& ds);

// ---- composition -----------------------------------------------------------------

// Everything computed from one segment's own audio.
struct SegmentAnalysis {
  PitchTrack pitch;
  IntensityTrack intensity;
  FeatureVector local;  // segment-level features in canonical order
  BoundarySlopes slopes;
  SegmentSummary summary;
  std::vector<Pause> pauses;
};

// Never throws on degenerate audio: failures impute and mask.
SegmentAnalysis analyze_segment(const corpus::Segment& seg, const AudioBuffer& audio);

struct ProsodyContext {
  const SegmentAnalysis* prev = nullptr;  // adjacent earlier segment in the dialogue
  const SegmentAnalysis* next = nullptr;  // adjacent later segment
  std::vector<std::size_t> repeated_words;
  std::optional<double> latency_prev;
  std::optional<double> latency_next;
  std::vector<SegmentSummary> history;    // summaries of earlier segments, any speaker
};

FeatureVector extract_prosodic(const corpus::Segment& seg, const SegmentAnalysis& self,
                               const ProsodyContext& ctx);

// Canonical feature order and the dialogue scope each feature depends on.
const std::vector<std::string>& prosodic_feature_names();
FeatureScope prosodic_scope(std::string_view name);

// Topographic prominence peak picking, shared by pitch and intensity.
std::vector<std::size_t> prominent_peaks(std::span<const double> values, double min_prominence);

// Centered running median over `width` samples (shrinking at the edges).
std::vector<double> median_filter(std::span<const double> values, int width);

}  // namespace oir::prosody

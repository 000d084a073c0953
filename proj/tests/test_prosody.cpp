#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oir/error.hpp"
#include "oir/prosody.hpp"
#include "support.hpp"

using namespace oir;
using namespace oir::prosody;
using oir::test::concat;
using oir::test::glide;
using oir::test::silence;
using oir::test::tone;
using oir::test::white_noise;

namespace {

double voiced_mean(const PitchTrack& t) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.voiced[i]) {
      s += t.f0[i];
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

double voiced_fraction(const PitchTrack& t) {
  return static_cast<double>(t.voiced_count()) / static_cast<double>(t.size());
}

PitchTrack track_of(std::vector<double> f0, double hop = 0.01) {
  PitchTrack t;
  for (std::size_t i = 0; i < f0.size(); ++i) {
    t.frame_times.push_back(0.02 + hop * static_cast<double>(i));
    t.voiced.push_back(f0[i] > 0);
    t.f0.push_back(f0[i]);
    t.strength.push_back(f0[i] > 0 ? 0.9 : 0.0);
  }
  return t;
}

}  // namespace

TEST_SUITE("prosody") {

TEST_CASE("pure 220 Hz tone") {
  const auto t = track_pitch(tone(220, 1.0));
  CHECK(std::abs(voiced_mean(t) - 220) < 2.0);
  CHECK(voiced_fraction(t) > 0.9);
}

TEST_CASE("digital silence is unvoiced") {
  const auto t = track_pitch(silence(1.0));
  CHECK(t.voiced_count() == 0);
  for (double f : t.f0) CHECK(f == kUnvoiced);
}

TEST_CASE("white noise is mostly unvoiced") {
  const auto t = track_pitch(white_noise(1.0, 0.3, 11));
  CHECK(voiced_fraction(t) < 0.2);
}

TEST_CASE("too short audio") {
  CHECK_THROWS_AS(track_pitch(tone(220, 0.05)), Error);
}

TEST_CASE("pitch is amplitude invariant") {
  const auto a = track_pitch(tone(180, 1.0, 0.6));
  const auto b = track_pitch(tone(180, 1.0, 0.3));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.voiced[i] == b.voiced[i]);
    CHECK(std::abs(a.f0[i] - b.f0[i]) <= 0.1);
  }
}

TEST_CASE("time shift leaves statistics in place") {
  const auto base = track_pitch(tone(200, 1.0));
  const auto shifted = track_pitch(concat({silence(0.1), tone(200, 1.0)}));
  CHECK(std::abs(voiced_mean(base) - voiced_mean(shifted)) < 0.5);
}

TEST_CASE("octave glide slope") {
  const auto t = track_pitch(glide(100, 200, 1.0));
  const auto fv = pitch_stats(t);
  REQUIRE(fv.get("pitch_slope"));
  CHECK(std::abs(*fv.get("pitch_slope") - 12.0) < 0.5);
}

TEST_CASE("adaptive range") {
  auto flat = track_of(std::vector<double>(20, 200.0));
  auto [lo, hi] = adapt_pitch_range(flat);
  CHECK(lo == doctest::Approx(150));
  CHECK(hi == doctest::Approx(300));

  std::vector<double> f0;
  for (int i = 0; i < 10; ++i) f0.push_back(70);
  for (int i = 0; i < 10; ++i) f0.push_back(400);
  auto [lo2, hi2] = adapt_pitch_range(track_of(f0));
  CHECK(lo2 == doctest::Approx(60));
  CHECK(hi2 == doctest::Approx(500));

  auto g = track_pitch(glide(180, 320, 1.0));
  auto [lo3, hi3] = adapt_pitch_range(g);
  CHECK(lo3 < 180);
  CHECK(hi3 > 320);

  CHECK_THROWS_AS(adapt_pitch_range(track_of({200, 200})), Error);
}

TEST_CASE("pitch stats on constructed contours") {
  const auto constant = pitch_stats(track_of(std::vector<double>(50, 150.0)));
  CHECK(*constant.get("pitch_std") == 0.0);
  CHECK(*constant.get("pitch_range") == 0.0);
  CHECK(*constant.get("pitch_num_peaks") == 0.0);
  CHECK(std::abs(*constant.get("pitch_slope")) < 1e-9);

  // rise-fall-rise-fall, 4 st each way
  std::vector<double> f0;
  for (int bump = 0; bump < 2; ++bump) {
    for (int i = 0; i <= 20; ++i) f0.push_back(100 * std::pow(2.0, (4.0 * i / 20.0) / 12.0));
    for (int i = 19; i >= 0; --i) f0.push_back(100 * std::pow(2.0, (4.0 * i / 20.0) / 12.0));
  }
  CHECK(*pitch_stats(track_of(f0)).get("pitch_num_peaks") == 2.0);

  const auto empty = pitch_stats(track_of({0, 0, 0}));
  CHECK_FALSE(empty.get("pitch_mean").has_value());
}

TEST_CASE("semitones") {
  CHECK(hz_to_semitones(200, 100) == 12.0);
  CHECK(hz_to_semitones(100, 100) == 0.0);
  CHECK(std::abs(hz_to_semitones(440, 415.30) - 1.0) < 0.01);
  for (double f : {55.0, 123.4, 261.63, 880.0}) {
    CHECK(hz_to_semitones(2 * f, f) == 12.0);
    CHECK(hz_to_semitones(f, 97.0) == doctest::Approx(-hz_to_semitones(97.0, f)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(hz_to_semitones(0, 100), Error);
  CHECK_THROWS_AS(hz_to_semitones(100, -1), Error);
}

TEST_CASE("intensity") {
  const auto a = intensity_features(tone(200, 1.0, 0.25));
  CHECK(*a.second.get("int_std") < 0.5);
  CHECK(*a.second.get("int_range") < 1.0);

  const auto b = intensity_features(tone(200, 1.0, 0.5));
  CHECK(std::abs(*b.second.get("int_mean") - *a.second.get("int_mean") - 20 * std::log10(2.0)) < 0.1);

  const double loud = std::pow(10.0, -6.0 / 20.0), quiet = std::pow(10.0, -26.0 / 20.0);
  const auto c = intensity_features(tone(200, 1.0, loud));
  const auto d = intensity_features(tone(200, 1.0, quiet));
  CHECK(std::abs(*c.second.get("int_max") - *d.second.get("int_max") - 20.0) < 0.2);

  const auto s = intensity_track(silence(0.5));
  for (double v : s.db) CHECK(v == 0.0);
}

TEST_CASE("voice quality") {
  const auto pure = tone(220, 1.0);
  const auto vq = voice_quality(pure, track_pitch(pure));
  CHECK(vq.jitter < 0.5);
  CHECK(vq.hnr > 25.0);

  // 5 dB SNR: noise power = signal power / 10^0.5
  auto noisy = tone(220, 1.0, 0.5);
  const double sig_power = 0.5 * 0.5 / 2.0;
  const auto noise = white_noise(1.0, std::sqrt(sig_power / std::pow(10.0, 0.5)), 5);
  for (std::size_t i = 0; i < noisy.samples.size(); ++i) noisy.samples[i] += noise.samples[i];
  const auto vqn = voice_quality(noisy, track_pitch(noisy));
  CHECK(std::abs(vqn.hnr - 5.0) < 2.0);

  auto am = tone(220, 1.0);
  for (std::size_t i = 0; i < am.samples.size(); ++i) {
    am.samples[i] *= static_cast<float>(1.0 + 0.1 * std::sin(2 * std::numbers::pi * 7.0 * static_cast<double>(i) / 16000.0));
  }
  CHECK(voice_quality(am, track_pitch(am)).shimmer > vq.shimmer);

  CHECK_THROWS_AS(voice_quality(silence(0.5), track_pitch(silence(0.5))), Error);
}

TEST_CASE("pauses") {
  const auto gap = concat({tone(200, 1.0), silence(0.3), tone(200, 1.0)});
  const auto pa = detect_pauses(intensity_track(gap), gap.duration());
  REQUIRE(pa.pauses.size() == 1);
  CHECK(std::abs(pa.pauses[0].duration - 0.3) <= 0.02);
  CHECK(pa.pauses[0].category == PauseCategory::Short);
  CHECK(pa.pauses[0].position == PausePosition::Medial);
  CHECK(std::abs(pa.features.value("pause_rel_longest") - 0.5) < 0.02);

  CHECK(detect_pauses(intensity_track(tone(200, 1.0)), 1.0).pauses.empty());
  const auto short_gap = concat({tone(200, 1.0), silence(0.15), tone(200, 1.0)});
  CHECK(detect_pauses(intensity_track(short_gap), short_gap.duration()).pauses.empty());

  for (double d : {0.2, 0.49, 0.5, 0.99, 1.0, 3.0}) {
    const auto c = categorize_pause(d);
    CHECK((c == PauseCategory::Short) == (d < 0.5));
    CHECK((c == PauseCategory::Long) == (d >= 1.0));
  }
}

TEST_CASE("speech timing") {
  const auto none = speech_timing(2.0, {}, 5);
  CHECK(none.articulation_rate == none.speech_rate);
  CHECK(none.speech_rate == doctest::Approx(2.5));

  std::vector<Pause> p{{0.5, 1.5, 1.0, PauseCategory::Long, PausePosition::Medial}};
  const auto with = speech_timing(2.0, p, 4);
  CHECK(with.speech_rate == doctest::Approx(2.0));
  CHECK(*with.articulation_rate == doctest::Approx(4.0));

  std::vector<Pause> all{{0.0, 2.0, 2.0, PauseCategory::Long, PausePosition::Medial}};
  CHECK_FALSE(speech_timing(2.0, all, 0).articulation_rate.has_value());

  // Five 200 ms syllables separated by short dips, over 2 s.
  audio::AudioBuffer utt;
  for (int k = 0; k < 5; ++k) {
    auto syl = tone(180, 0.25, 0.5);
    for (std::size_t i = 0; i < syl.samples.size(); ++i) {
      syl.samples[i] *= static_cast<float>(std::sin(std::numbers::pi * static_cast<double>(i) / syl.samples.size()));
    }
    utt = concat({utt, syl, silence(0.15)});
  }
  utt = concat({utt, silence(2.0 - utt.duration())});
  const auto nuc = syllable_nuclei(intensity_track(utt), track_pitch(utt));
  const auto st = speech_timing(2.0, {}, nuc.size());
  CHECK(std::abs(st.speech_rate - 2.5) <= 0.5);
}

TEST_CASE("baselines and normalization") {
  SegmentSummary target{"t", "A", 10, 11, 150.0, 60.0};
  std::vector<SegmentSummary> hist{{"a", "A", 0, 1, 100.0, 50.0}};
  auto b1 = speaker_baseline(hist, target);
  CHECK(b1.pitch->mean == 100.0);
  CHECK(b1.pitch->std == 0.0);

  hist.push_back({"b", "A", 2, 3, 200.0, 70.0});
  hist.push_back({"c", "B", 4, 5, 400.0, 80.0});
  auto b2 = speaker_baseline(hist, target);
  CHECK(b2.pitch->mean == 150.0);
  CHECK(b2.pitch->std == 50.0);
  CHECK(b2.n_segments == 2);

  auto with_target = hist;
  with_target.push_back(target);
  with_target.push_back({"later", "A", 10.5, 12, 500.0, 90.0});
  CHECK(speaker_baseline(with_target, target).pitch->mean == 150.0);

  CHECK_THROWS_AS(speaker_baseline({}, target), Error);

  ChannelStats s{180, 20, 140, 240};
  const auto n = normalize_to_baseline(220, s);
  CHECK(std::abs(n.z_score - 2.0) < 1e-9);
  CHECK(std::abs(n.rel_change - 22.222222222222222) < 1e-9);
  CHECK(std::abs(n.range_pos - 0.8) < 1e-9);

  const auto at_mean = normalize_to_baseline(180, s);
  CHECK(at_mean.z_score == 0.0);
  CHECK(at_mean.rel_change == 0.0);
  CHECK(at_mean.range_pos == doctest::Approx(0.4));

  CHECK(normalize_to_baseline(5, ChannelStats{3, 0, 3, 3}).z_score == 0.0);
  CHECK(normalize_to_baseline(5, ChannelStats{3, 0, 3, 3}).range_pos == 0.5);
  for (double v : {-100.0, 0.0, 139.0, 1000.0}) {
    const double rp = normalize_to_baseline(v, s).range_pos;
    CHECK(rp >= 0.0);
    CHECK(rp <= 1.0);
  }
}

TEST_CASE("slope transitions") {
  const auto t = slope_transition(3.0, -2.0);
  CHECK(*t.transition == -5.0);
  CHECK(*slope_transition(0.0, 0.0).transition == 0.0);
  CHECK_FALSE(slope_transition(std::nullopt, 1.0).transition.has_value());

  // Falling TS at -6 st/s, rising RI at +8 st/s.
  const double f_ts0 = 200.0, f_ts1 = 200.0 * std::pow(2.0, -6.0 * 1.0 / 12.0);
  const double f_ri0 = 120.0, f_ri1 = 120.0 * std::pow(2.0, 8.0 * 1.0 / 12.0);
  const auto ts = glide(f_ts0, f_ts1, 1.0);
  const auto ri = glide(f_ri0, f_ri1, 1.0);
  const auto s_ts = boundary_slopes(track_pitch(ts), intensity_track(ts));
  const auto s_ri = boundary_slopes(track_pitch(ri), intensity_track(ri));
  const auto tr = slope_transition(s_ts.pitch_end, s_ri.pitch_start);
  REQUIRE(tr.transition);
  CHECK(std::abs(*tr.transition - 14.0) < 1.0);
}

TEST_CASE("extract is deterministic and degrades gracefully") {
  corpus::Segment seg;
  seg.segment_id = "s";
  seg.speaker = "A";
  seg.t_start = 0;
  seg.t_end = 1.5;
  const auto audio = glide(150, 220, 1.5);
  const auto a1 = analyze_segment(seg, audio);
  const auto a2 = analyze_segment(seg, audio);
  const auto v1 = extract_prosodic(seg, a1, {});
  const auto v2 = extract_prosodic(seg, a2, {});
  CHECK(v1.names() == prosodic_feature_names());
  for (std::size_t i = 0; i < v1.size(); ++i) {
    CHECK((v1.values()[i] == v2.values()[i] || (std::isnan(v1.values()[i]) && std::isnan(v2.values()[i]))));
  }
  CHECK(*v1.get("pitch_slope") > 0);

  const auto silent = analyze_segment(seg, silence(1.5));
  const auto vs = extract_prosodic(seg, silent, {});
  CHECK_FALSE(vs.get("pitch_mean").has_value());
  CHECK(*vs.get("pause_num") == 1.0);
  CHECK(*vs.get("pause_long") == 1.0);
  CHECK(vs.value("pitch_z") == 0.0);
  CHECK_FALSE(vs.is_present("pitch_z"));
}

}  // TEST_SUITE

#include "oir/prosody.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "oir/error.hpp"
#include "oir/kernels.hpp"

namespace oir::prosody {

namespace {

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double pop_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

// Linear-interpolated quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::optional<double> ls_slope(std::span<const double> t, std::span<const double> y) {
  if (t.size() < 2) return std::nullopt;
  const double mt = mean_of(t);
  const double my = mean_of(y);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += (t[i] - mt) * (y[i] - my);
    den += (t[i] - mt) * (t[i] - mt);
  }
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

std::vector<float> hann(std::size_t n) {
  std::vector<float> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                     static_cast<double>(n - 1)));
  }
  return w;
}

constexpr double kDbReference = 2e-5;
constexpr double kAbsoluteSilenceDb = 20.0;
constexpr double kPauseDropDb = 25.0;
constexpr double kStatsDropDb = 40.0;
constexpr double kMinPause = 0.2;

double silence_threshold(const IntensityTrack& track) {
  return std::max(track.max_db() - kPauseDropDb, kAbsoluteSilenceDb);
}

}  // namespace

std::size_t PitchTrack::voiced_count() const {
  return static_cast<std::size_t>(std::count(voiced.begin(), voiced.end(), true));
}

std::vector<double> median_filter(std::span<const double> values, int width) {
  std::vector<double> out(values.size());
  const int half = width / 2;
  const int n = static_cast<int>(values.size());
  std::vector<double> buf;
  for (int i = 0; i < n; ++i) {
    buf.clear();
    for (int k = std::max(0, i - half); k <= std::min(n - 1, i + half); ++k) buf.push_back(values[k]);
    out[i] = median_of(buf);
  }
  return out;
}

std::vector<std::size_t> prominent_peaks(std::span<const double> v, double min_prominence) {
  std::vector<std::size_t> peaks;
  const std::size_t n = v.size();
  std::size_t i = 1;
  while (i + 1 < n) {
    if (v[i] > v[i - 1]) {
      // Walk across a plateau.
      std::size_t j = i;
      while (j + 1 < n && v[j + 1] == v[i]) ++j;
      if (j + 1 < n && v[j + 1] < v[i]) {
        const std::size_t peak = (i + j) / 2;
        const double h = v[peak];
        double left_min = h;
        for (std::size_t k = i; k-- > 0;) {
          if (v[k] > h) break;
          left_min = std::min(left_min, v[k]);
        }
        double right_min = h;
        for (std::size_t k = j + 1; k < n; ++k) {
          if (v[k] > h) break;
          right_min = std::min(right_min, v[k]);
        }
        if (h - std::max(left_min, right_min) >= min_prominence) peaks.push_back(peak);
      }
      i = j + 1;
    } else {
      ++i;
    }
  }
  return peaks;
}

double hz_to_semitones(double f, double ref) {
  if (!(f > 0.0) || !(ref > 0.0)) {
    throw Error(Errc::NonPositiveFrequency, "semitone conversion needs positive frequencies");
  }
  return 12.0 * std::log2(f / ref);
}

// ---- pitch -----------------------------------------------------------------------

PitchTrack track_pitch(const AudioBuffer& audio, double floor, double ceiling, const PitchParams& params) {
  audio.check();
  if (!(floor >= kDefaultFloor - 1e-9 && floor < ceiling && ceiling <= kDefaultCeiling + 1e-9)) {
    throw Error(Errc::BadConfig, "pitch range must satisfy 60 <= floor < ceiling <= 500");
  }
  const double sr = audio.sample_rate;
  const auto win = static_cast<std::size_t>(std::lround(params.window * sr));
  const auto hop = static_cast<std::size_t>(std::lround(params.hop * sr));
  const std::size_t n = audio.samples.size();
  if (n < 2 * win) throw Error(Errc::AudioTooShort, "pitch tracking needs two analysis windows");

  PitchTrack track;
  track.floor = floor;
  track.ceiling = ceiling;

  const std::size_t lag_min = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sr / ceiling)));
  const std::size_t lag_max = std::min(win - 2, static_cast<std::size_t>(std::ceil(sr / floor)));

  const auto window = hann(win);
  // Normalized autocorrelation of the window itself, for the Boersma correction.
  std::vector<float> rw(lag_max + 2);
  simd::active().autocorr_f32(window.data(), win, 0, lag_max + 1, rw.data());
  const float rw0 = rw[0];
  for (float& r : rw) r /= rw0;

  float global_peak = 0.0f;
  for (float x : audio.samples) global_peak = std::max(global_peak, std::abs(x));

  const std::size_t frames = (n - win) / hop + 1;
  track.frame_times.resize(frames);
  track.f0.assign(frames, kUnvoiced);
  track.voiced.assign(frames, false);
  track.strength.assign(frames, 0.0);

  std::vector<float> frame(win);
  std::vector<float> acf(lag_max + 2);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * hop;
    track.frame_times[f] = (static_cast<double>(start) + 0.5 * static_cast<double>(win)) / sr;

    const float* x = audio.samples.data() + start;
    double mean = 0.0;
    float local_peak = 0.0f;
    for (std::size_t i = 0; i < win; ++i) {
      mean += x[i];
      local_peak = std::max(local_peak, std::abs(x[i]));
    }
    mean /= static_cast<double>(win);
    if (global_peak < 1e-6f || local_peak < params.silence_threshold * global_peak) continue;
    for (std::size_t i = 0; i < win; ++i) frame[i] = (x[i] - static_cast<float>(mean)) * window[i];

    simd::active().autocorr_f32(frame.data(), win, 0, lag_max + 1, acf.data());
    const double r0 = acf[0];
    if (r0 <= 0.0) continue;
    auto norm = [&](std::size_t k) { return static_cast<double>(acf[k]) / r0 / static_cast<double>(rw[k]); };

    // Local maxima of the corrected ACF in the admissible lag range.
    double best = -1.0;
    std::vector<std::pair<std::size_t, double>> cands;
    for (std::size_t k = lag_min; k <= lag_max; ++k) {
      const double a = norm(k - 1), b = norm(k), c = norm(k + 1);
      if (b > a && b >= c) {
        cands.emplace_back(k, b);
        best = std::max(best, b);
      }
    }
    if (cands.empty() || best < params.voicing_threshold) continue;
    // Prefer the shortest lag close to the best peak, which suppresses
    // choosing a multiple of the true period.
    std::size_t k = cands.front().first;
    for (const auto& [lag, val] : cands) {
      if (val >= 0.9 * best) {
        k = lag;
        break;
      }
    }
    const double a = norm(k - 1), b = norm(k), c = norm(k + 1);
    const double denom = a - 2.0 * b + c;
    const double delta = denom != 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
    const double lag = static_cast<double>(k) + delta;
    const double peak = std::min(1.0, b - 0.25 * (a - c) * delta);
    const double f0 = sr / lag;
    track.strength[f] = peak;
    if (peak >= params.voicing_threshold && f0 >= floor && f0 <= ceiling) {
      track.f0[f] = f0;
      track.voiced[f] = true;
    }
  }

  // Median smoothing over voiced neighbours.
  const int half = params.median_width / 2;
  std::vector<double> smoothed = track.f0;
  std::vector<double> buf;
  for (std::size_t f = 0; f < frames; ++f) {
    if (!track.voiced[f]) continue;
    buf.clear();
    const std::size_t lo = f >= static_cast<std::size_t>(half) ? f - half : 0;
    const std::size_t hi = std::min(frames - 1, f + half);
    for (std::size_t k = lo; k <= hi; ++k) {
      if (track.voiced[k]) buf.push_back(track.f0[k]);
    }
    smoothed[f] = median_of(buf);
  }
  track.f0 = std::move(smoothed);

  // Robust outlier rejection around the segment median.
  std::vector<double> voiced_f0;
  for (std::size_t f = 0; f < frames; ++f) {
    if (track.voiced[f]) voiced_f0.push_back(track.f0[f]);
  }
  if (voiced_f0.size() >= 3) {
    const double med = median_of(voiced_f0);
    std::vector<double> dev;
    for (double v : voiced_f0) dev.push_back(std::abs(v - med));
    const double robust_std = 1.4826 * median_of(dev);
    if (robust_std > 0.0) {
      for (std::size_t f = 0; f < frames; ++f) {
        if (track.voiced[f] && std::abs(track.f0[f] - med) > params.outlier_robust_std * robust_std) {
          track.voiced[f] = false;
          track.f0[f] = kUnvoiced;
        }
      }
    }
  }
  return track;
}

std::pair<double, double> adapt_pitch_range(const PitchTrack& track) {
  std::vector<double> v;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (track.voiced[i]) v.push_back(track.f0[i]);
  }
  if (v.size() < 10) throw Error(Errc::TooFewVoicedFrames, "range adaptation needs 10 voiced frames");
  std::sort(v.begin(), v.end());
  const double q25 = quantile_sorted(v, 0.25);
  const double q75 = quantile_sorted(v, 0.75);
  return {std::max(kDefaultFloor, 0.75 * q25), std::min(kDefaultCeiling, 1.5 * q75)};
}

PitchTrack track_pitch_adaptive(const AudioBuffer& audio, const PitchParams& params) {
  PitchTrack first = track_pitch(audio, kDefaultFloor, kDefaultCeiling, params);
  if (first.voiced_count() < 10) return first;
  auto [lo, hi] = adapt_pitch_range(first);
  if (!(lo < hi)) return first;
  return track_pitch(audio, lo, hi, params);
}

FeatureVector pitch_stats(const PitchTrack& track) {
  FeatureVector fv;
  std::vector<double> hz, st, t;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (track.voiced[i]) {
      hz.push_back(track.f0[i]);
      st.push_back(hz_to_semitones(track.f0[i]));
      t.push_back(track.frame_times[i]);
    }
  }
  if (hz.empty()) {
    for (const char* name : {"pitch_min", "pitch_max", "pitch_mean", "pitch_std", "pitch_range",
                             "pitch_num_peaks", "pitch_slope", "pitch_slope_mean", "pitch_slope_std",
                             "pitch_accel"}) {
      fv.set_missing(name);
    }
    return fv;
  }
  const auto [mn, mx] = std::minmax_element(hz.begin(), hz.end());
  fv.set("pitch_min", *mn);
  fv.set("pitch_max", *mx);
  fv.set("pitch_mean", mean_of(hz));
  fv.set("pitch_std", pop_std(hz));
  fv.set("pitch_range", *mx - *mn);
  const auto contour = median_filter(st, 5);
  fv.set("pitch_num_peaks", static_cast<double>(prominent_peaks(contour, 1.5).size()));
  fv.set_optional("pitch_slope", ls_slope(t, st));

  // Derivatives only across adjacent voiced frames.
  std::vector<double> d1, d2;
  for (std::size_t i = 0; i + 1 < track.size(); ++i) {
    if (!track.voiced[i] || !track.voiced[i + 1]) continue;
    const double dt = track.frame_times[i + 1] - track.frame_times[i];
    const double a = hz_to_semitones(track.f0[i]);
    const double b = hz_to_semitones(track.f0[i + 1]);
    d1.push_back((b - a) / dt);
    if (i + 2 < track.size() && track.voiced[i + 2]) {
      const double c = hz_to_semitones(track.f0[i + 2]);
      d2.push_back(std::abs(c - 2.0 * b + a) / (dt * dt));
    }
  }
  if (d1.empty()) {
    fv.set_missing("pitch_slope_mean");
    fv.set_missing("pitch_slope_std");
  } else {
    fv.set("pitch_slope_mean", mean_of(d1));
    fv.set("pitch_slope_std", pop_std(d1));
  }
  if (d2.empty()) fv.set_missing("pitch_accel"); else fv.set("pitch_accel", mean_of(d2));
  return fv;
}

// ---- intensity -------------------------------------------------------------------

double IntensityTrack::max_db() const { return db.empty() ? 0.0 : *std::max_element(db.begin(), db.end()); }

IntensityTrack intensity_track(const AudioBuffer& audio) {
  audio.check();
  IntensityTrack track;
  const double sr = audio.sample_rate;
  const auto win = static_cast<std::size_t>(std::lround(track.window * sr));
  const auto hop = static_cast<std::size_t>(std::lround(track.hop * sr));
  if (audio.samples.size() < win) throw Error(Errc::AudioTooShort, "intensity needs one analysis window");
  const std::size_t frames = (audio.samples.size() - win) / hop + 1;
  track.frame_times.resize(frames);
  track.db.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const float* x = audio.samples.data() + f * hop;
    const double ms = static_cast<double>(simd::active().sum_squares_f32(x, win)) / static_cast<double>(win);
    track.frame_times[f] = (static_cast<double>(f * hop) + 0.5 * static_cast<double>(win)) / sr;
    track.db[f] = 10.0 * std::log10(ms / (kDbReference * kDbReference) + 1.0);
  }
  return track;
}

FeatureVector intensity_stats(const IntensityTrack& track) {
  FeatureVector fv;
  const double floor = track.max_db() - kStatsDropDb;
  std::vector<double> v;
  for (double d : track.db) {
    if (d > 0.0 && d > floor) v.push_back(d);
  }
  if (v.empty()) {
    for (const char* name : {"int_min", "int_max", "int_mean", "int_std", "int_range"}) fv.set_missing(name);
    return fv;
  }
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  fv.set("int_min", *mn);
  fv.set("int_max", *mx);
  fv.set("int_mean", mean_of(v));
  fv.set("int_std", pop_std(v));
  fv.set("int_range", *mx - *mn);
  return fv;
}

std::pair<IntensityTrack, FeatureVector> intensity_features(const AudioBuffer& audio) {
  IntensityTrack track = intensity_track(audio);
  FeatureVector fv = intensity_stats(track);
  return {std::move(track), std::move(fv)};
}

// ---- voice quality ---------------------------------------------------------------

VoiceQuality voice_quality(const AudioBuffer& audio, const PitchTrack& track) {
  const double sr = audio.sample_rate;
  const auto& x = audio.samples;
  const double min_period = sr / track.ceiling;
  const double max_period = sr / track.floor;

  std::vector<double> period_diffs, periods, amp_diffs, amps;
  bool any_stretch = false;
  std::size_t f = 0;
  while (f < track.size()) {
    if (!track.voiced[f]) {
      ++f;
      continue;
    }
    std::size_t g = f;
    while (g + 1 < track.size() && track.voiced[g + 1]) ++g;
    if (g - f + 1 >= 3) {
      any_stretch = true;
      const double half = 0.020;
      const auto lo = static_cast<long>(std::max(0.0, (track.frame_times[f] - half) * sr));
      const auto hi = static_cast<long>(std::min(static_cast<double>(x.size()) - 1.0, (track.frame_times[g] + half) * sr));
      auto period_at = [&](long pos) {
        const double t = static_cast<double>(pos) / sr;
        std::size_t best = f;
        for (std::size_t k = f; k <= g; ++k) {
          if (std::abs(track.frame_times[k] - t) < std::abs(track.frame_times[best] - t)) best = k;
        }
        return sr / track.f0[best];
      };
      auto argmax = [&](long a, long b) {
        long m = a;
        for (long i = a; i <= b; ++i) {
          if (x[static_cast<std::size_t>(i)] > x[static_cast<std::size_t>(m)]) m = i;
        }
        return m;
      };
      auto refine = [&](long i) {
        if (i <= 0 || i + 1 >= static_cast<long>(x.size())) return std::pair<double, double>(static_cast<double>(i), x[static_cast<std::size_t>(i)]);
        const double a = x[static_cast<std::size_t>(i - 1)], b = x[static_cast<std::size_t>(i)], c = x[static_cast<std::size_t>(i + 1)];
        const double den = a - 2.0 * b + c;
        const double d = den != 0.0 ? std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : 0.0;
        return std::pair<double, double>(static_cast<double>(i) + d, b - 0.25 * (a - c) * d);
      };

      std::vector<std::pair<double, double>> marks;
      long p = argmax(lo, std::min(hi, lo + static_cast<long>(std::ceil(period_at(lo)))));
      marks.push_back(refine(p));
      while (true) {
        const double T = period_at(p);
        const long a = p + static_cast<long>(std::floor(0.8 * T));
        const long b = p + static_cast<long>(std::ceil(1.2 * T));
        if (b > hi) break;
        p = argmax(a, b);
        marks.push_back(refine(p));
      }
      std::vector<double> T, A;
      for (std::size_t i = 1; i < marks.size(); ++i) {
        T.push_back(marks[i].first - marks[i - 1].first);
        A.push_back(std::abs(marks[i].second));
      }
      for (std::size_t i = 0; i < T.size(); ++i) {
        if (T[i] < min_period * 0.9 || T[i] > max_period * 1.1) continue;
        periods.push_back(T[i]);
        amps.push_back(A[i]);
        if (i > 0 && T[i - 1] >= min_period * 0.9 && T[i - 1] <= max_period * 1.1 &&
            std::max(T[i], T[i - 1]) / std::min(T[i], T[i - 1]) <= 1.3) {
          period_diffs.push_back(std::abs(T[i] - T[i - 1]));
          amp_diffs.push_back(std::abs(A[i] - A[i - 1]));
        }
      }
    }
    f = g + 1;
  }
  if (!any_stretch || period_diffs.empty()) {
    throw Error(Errc::InsufficientVoicing, "voice quality needs three consecutive voiced frames");
  }

  VoiceQuality vq;
  vq.jitter = 100.0 * mean_of(period_diffs) / mean_of(periods);
  const double mean_amp = mean_of(amps);
  vq.shimmer = mean_amp > 0.0 ? 100.0 * mean_of(amp_diffs) / mean_amp : 0.0;
  std::vector<double> hnr;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (!track.voiced[i]) continue;
    const double r = std::clamp(track.strength[i], 1e-6, 1.0 - 1e-6);
    hnr.push_back(10.0 * std::log10(r / (1.0 - r)));
  }
  vq.hnr = mean_of(hnr);
  return vq;
}

// ---- pauses ----------------------------------------------------------------------

PauseCategory categorize_pause(double duration) {
  if (duration < 0.5) return PauseCategory::Short;
  if (duration < 1.0) return PauseCategory::Medium;
  return PauseCategory::Long;
}

PauseAnalysis detect_pauses(const IntensityTrack& track, double segment_duration) {
  PauseAnalysis out;
  const double thr = silence_threshold(track);
  const double half = 0.5 * track.window;
  std::size_t i = 0;
  while (i < track.size()) {
    if (track.db[i] >= thr) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < track.size() && track.db[j + 1] < thr) ++j;
    Pause p;
    p.start = std::max(0.0, track.frame_times[i] - half);
    p.end = std::min(segment_duration, track.frame_times[j] + half);
    p.duration = p.end - p.start;
    if (p.duration >= kMinPause) {
      p.category = categorize_pause(p.duration);
      const double mid = 0.5 * (p.start + p.end) / segment_duration;
      p.position = mid < 1.0 / 3.0 ? PausePosition::Initial
                   : mid < 2.0 / 3.0 ? PausePosition::Medial
                                     : PausePosition::Final;
      out.pauses.push_back(p);
    }
    i = j + 1;
  }

  std::array<double, 3> by_cat{0, 0, 0}, by_pos{0, 0, 0};
  const Pause* longest = nullptr;
  for (const Pause& p : out.pauses) {
    out.total += p.duration;
    by_cat[static_cast<std::size_t>(p.category)] += 1;
    by_pos[static_cast<std::size_t>(p.position)] += 1;
    if (!longest || p.duration > longest->duration) longest = &p;
  }
  FeatureVector& fv = out.features;
  fv.set("pause_num", static_cast<double>(out.pauses.size()));
  fv.set("pause_total", out.total);
  fv.set("pause_mean", out.pauses.empty() ? 0.0 : out.total / static_cast<double>(out.pauses.size()));
  fv.set("pause_short", by_cat[0]);
  fv.set("pause_medium", by_cat[1]);
  fv.set("pause_long", by_cat[2]);
  fv.set("pause_initial", by_pos[0]);
  fv.set("pause_medial", by_pos[1]);
  fv.set("pause_final", by_pos[2]);
  fv.set("pause_rel_longest",
         longest ? std::clamp(0.5 * (longest->start + longest->end) / segment_duration, 0.0, 1.0) : 0.0);
  return out;
}

// ---- timing ----------------------------------------------------------------------

std::vector<std::size_t> syllable_nuclei(const IntensityTrack& intensity, const PitchTrack& pitch) {
  std::vector<std::size_t> out;
  if (intensity.size() == 0) return out;
  const double thr = silence_threshold(intensity);
  for (std::size_t p : prominent_peaks(intensity.db, 2.0)) {
    if (intensity.db[p] < thr) continue;
    const double t = intensity.frame_times[p];
    bool voiced = false;
    for (std::size_t k = 0; k < pitch.size() && !voiced; ++k) {
      voiced = pitch.voiced[k] && std::abs(pitch.frame_times[k] - t) <= 0.025;
    }
    if (voiced) out.push_back(p);
  }
  return out;
}

SpeechTiming speech_timing(double duration, std::span<const Pause> pauses, std::size_t nuclei) {
  if (!(duration > 0.0)) throw Error(Errc::DegenerateDuration, "segment duration must be positive");
  SpeechTiming st;
  st.duration = duration;
  st.nuclei = nuclei;
  st.speech_rate = static_cast<double>(nuclei) / duration;
  double paused = 0.0;
  for (const Pause& p : pauses) paused += p.duration;
  if (pauses.empty()) {
    st.articulation_rate = st.speech_rate;
  } else if (duration - paused > 1e-9) {
    st.articulation_rate = static_cast<double>(nuclei) / (duration - paused);
  }
  return st;
}

SpeechTiming speech_timing(const corpus::Segment& seg, std::span<const Pause> pauses, const AudioBuffer& audio) {
  std::size_t nuclei = 0;
  try {
    const PitchTrack pitch = track_pitch_adaptive(audio);
    nuclei = syllable_nuclei(intensity_track(audio), pitch).size();
  } catch (const Error& e) {
    if (e.code() != Errc::AudioTooShort) throw;
  }
  return speech_timing(seg.duration(), pauses, nuclei);
}

// ---- word level ------------------------------------------------------------------

namespace {

void span_prosody(FeatureVector& fv, const std::string& prefix, const std::vector<std::pair<double, double>>& spans,
                  const PitchTrack& pitch, const IntensityTrack& intensity) {
  std::vector<double> st, db;
  for (const auto& [a, b] : spans) {
    for (std::size_t i = 0; i < pitch.size(); ++i) {
      if (pitch.voiced[i] && pitch.frame_times[i] >= a && pitch.frame_times[i] <= b) {
        st.push_back(hz_to_semitones(pitch.f0[i]));
      }
    }
    for (std::size_t i = 0; i < intensity.size(); ++i) {
      if (intensity.frame_times[i] >= a && intensity.frame_times[i] <= b) db.push_back(intensity.db[i]);
    }
  }
  if (st.empty()) {
    fv.set_missing(prefix + "_pitch_mean");
    fv.set_missing(prefix + "_pitch_max");
  } else {
    fv.set(prefix + "_pitch_mean", mean_of(st));
    fv.set(prefix + "_pitch_max", *std::max_element(st.begin(), st.end()));
  }
  if (db.empty()) {
    fv.set_missing(prefix + "_int_mean");
    fv.set_missing(prefix + "_int_max");
  } else {
    fv.set(prefix + "_int_mean", mean_of(db));
    fv.set(prefix + "_int_max", *std::max_element(db.begin(), db.end()));
  }
}

std::optional<std::pair<double, double>> token_span(const corpus::Segment& seg, const corpus::Token& tok) {
  if (!tok.t_start || !tok.t_end) return std::nullopt;
  return std::pair<double, double>(*tok.t_start - seg.t_start, *tok.t_end - seg.t_start);
}

}  // namespace

FeatureVector word_level_prosody(const corpus::Segment& seg, std::span<const std::size_t> repeated_words,
                                 const PitchTrack& pitch, const IntensityTrack& intensity) {
  std::vector<std::pair<double, double>> rep, wat;
  for (std::size_t i : repeated_words) {
    if (i < seg.tokens.size()) {
      if (auto s = token_span(seg, seg.tokens[i])) rep.push_back(*s);
    }
  }
  for (const corpus::Token& tok : seg.tokens) {
    if (tok.lemma == "wat") {
      if (auto s = token_span(seg, tok)) wat.push_back(*s);
    }
  }
  FeatureVector fv;
  span_prosody(fv, "rep", rep, pitch, intensity);
  span_prosody(fv, "wat", wat, pitch, intensity);
  return fv;
}

FeatureVector word_level_prosody(const corpus::Segment& seg, std::span<const std::size_t> repeated_words,
                                 const AudioBuffer& audio) {
  PitchTrack pitch;
  IntensityTrack intensity;
  try {
    pitch = track_pitch_adaptive(audio);
    intensity = intensity_track(audio);
  } catch (const Error& e) {
    if (e.code() != Errc::AudioTooShort) throw;
  }
  return word_level_prosody(seg, repeated_words, pitch, intensity);
}

// ---- baselines -------------------------------------------------------------------

namespace {

std::optional<ChannelStats> channel_stats(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  ChannelStats s;
  s.mean = mean_of(v);
  s.std = pop_std(v);
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

}  // namespace

SpeakerBaseline speaker_baseline(std::span<const SegmentSummary> history, const SegmentSummary& target) {
  SpeakerBaseline b;
  b.speaker = target.speaker;
  std::vector<double> pitch, intensity;
  for (const SegmentSummary& s : history) {
    if (s.speaker != target.speaker || s.segment_id == target.segment_id || s.t_end > target.t_start) continue;
    ++b.n_segments;
    if (s.pitch_mean) pitch.push_back(*s.pitch_mean);
    if (s.intensity_mean) intensity.push_back(*s.intensity_mean);
  }
  if (b.n_segments == 0) throw Error(Errc::NoHistory, "no earlier segment by speaker " + target.speaker);
  b.pitch = channel_stats(pitch);
  b.intensity = channel_stats(intensity);
  return b;
}

Normalized normalize_to_baseline(double value, const ChannelStats& s) {
  Normalized n;
  n.z_score = s.std > 0.0 ? (value - s.mean) / s.std : 0.0;
  n.rel_change = s.mean != 0.0 ? 100.0 * (value - s.mean) / s.mean : 0.0;
  n.range_pos = s.max > s.min ? std::clamp((value - s.min) / (s.max - s.min), 0.0, 1.0) : 0.5;
  return n;
}

Normalized normalize_to_baseline(double value, const SpeakerBaseline& baseline, Channel channel) {
  const auto& stats = channel == Channel::Pitch ? baseline.pitch : baseline.intensity;
  if (!stats) throw Error(Errc::NoHistory, "baseline has no values for this channel");
  return normalize_to_baseline(value, *stats);
}

// ---- transitions -----------------------------------------------------------------

BoundarySlopes boundary_slopes(const PitchTrack& pitch, const IntensityTrack& intensity, double edge) {
  BoundarySlopes out;
  auto fit = [](const std::vector<double>& t, const std::vector<double>& y, bool at_start, double edge_len)
      -> std::optional<double> {
    if (t.size() < 3) return std::nullopt;
    std::vector<double> tt, yy;
    const double limit = at_start ? t.front() + edge_len : t.back() - edge_len;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (at_start ? t[i] <= limit : t[i] >= limit) {
        tt.push_back(t[i]);
        yy.push_back(y[i]);
      }
    }
    if (tt.size() < 3) return std::nullopt;
    return ls_slope(tt, yy);
  };

  std::vector<double> pt, ps;
  for (std::size_t i = 0; i < pitch.size(); ++i) {
    if (pitch.voiced[i]) {
      pt.push_back(pitch.frame_times[i]);
      ps.push_back(hz_to_semitones(pitch.f0[i]));
    }
  }
  out.pitch_start = fit(pt, ps, true, edge);
  out.pitch_end = fit(pt, ps, false, edge);

  if (intensity.size() > 0) {
    const double thr = silence_threshold(intensity);
    std::vector<double> it, iv;
    for (std::size_t i = 0; i < intensity.size(); ++i) {
      if (intensity.db[i] >= thr) {
        it.push_back(intensity.frame_times[i]);
        iv.push_back(intensity.db[i]);
      }
    }
    out.intensity_start = fit(it, iv, true, edge);
    out.intensity_end = fit(it, iv, false, edge);
  }
  return out;
}

Transition slope_transition(std::optional<double> end_slope_prev, std::optional<double> start_slope_cur) {
  Transition t{end_slope_prev, start_slope_cur, std::nullopt};
  if (end_slope_prev && start_slope_cur) t.transition = *start_slope_cur - *end_slope_prev;
  return t;
}

Latency latency(const corpus::OirSequence& seq, const corpus::Dataset& ds) {
  if (seq.ts_ids.empty() || seq.ri_ids.empty()) {
    throw Error(Errc::MissingComponent, "sequence " + seq.sequence_id + " lacks a TS or RI");
  }
  auto seg = [&](const std::string& id) -> const corpus::Segment& {
    const corpus::Segment* s = ds.find(id);
    if (!s) throw Error(Errc::MissingSegment, id);
    return *s;
  };
  Latency l;
  l.ts_ri = seg(seq.ri_ids.front()).t_start - seg(seq.ts_ids.back()).t_end;
  if (!seq.rs_ids.empty()) l.ri_rs = seg(seq.rs_ids.front()).t_start - seg(seq.ri_ids.back()).t_end;
  return l;
}

// ---- composition -----------------------------------------------------------------

namespace {

const std::vector<std::pair<std::string, FeatureScope>>& feature_table() {
  using S = FeatureScope;
  static const std::vector<std::pair<std::string, FeatureScope>> table = {
      {"pitch_min", S::Current},          {"pitch_max", S::Current},
      {"pitch_mean", S::Current},         {"pitch_std", S::Current},
      {"pitch_range", S::Current},        {"pitch_num_peaks", S::Current},
      {"pitch_slope", S::Current},        {"pitch_slope_mean", S::Current},
      {"pitch_slope_std", S::Current},    {"pitch_accel", S::Current},
      {"int_min", S::Current},            {"int_max", S::Current},
      {"int_mean", S::Current},           {"int_std", S::Current},
      {"int_range", S::Current},          {"jitter", S::Current},
      {"shimmer", S::Current},            {"hnr", S::Current},
      {"pause_num", S::Current},          {"pause_total", S::Current},
      {"pause_mean", S::Current},         {"pause_short", S::Current},
      {"pause_medium", S::Current},       {"pause_long", S::Current},
      {"pause_initial", S::Current},      {"pause_medial", S::Current},
      {"pause_final", S::Current},        {"pause_rel_longest", S::Current},
      {"duration", S::Current},           {"speech_rate", S::Current},
      {"articulation_rate", S::Current},  {"wat_pitch_mean", S::Current},
      {"wat_pitch_max", S::Current},      {"wat_int_mean", S::Current},
      {"wat_int_max", S::Current},        {"pitch_start_slope", S::Current},
      {"pitch_end_slope", S::Current},    {"int_start_slope", S::Current},
      {"int_end_slope", S::Current},
      {"rep_pitch_mean", S::Past},        {"rep_pitch_max", S::Past},
      {"rep_int_mean", S::Past},          {"rep_int_max", S::Past},
      {"pitch_z", S::Past},               {"pitch_rel_change", S::Past},
      {"pitch_range_pos", S::Past},       {"int_z", S::Past},
      {"int_rel_change", S::Past},        {"int_range_pos", S::Past},
      {"pitch_end_slope_prev", S::Past},  {"pitch_transition_prev", S::Past},
      {"int_end_slope_prev", S::Past},    {"int_transition_prev", S::Past},
      {"latency_prev", S::Past},
      {"pitch_start_slope_next", S::Future}, {"pitch_transition_next", S::Future},
      {"int_start_slope_next", S::Future},   {"int_transition_next", S::Future},
      {"latency_next", S::Future},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& prosodic_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [n, s] : feature_table()) v.push_back(n);
    return v;
  }();
  return names;
}

FeatureScope prosodic_scope(std::string_view name) {
  for (const auto& [n, s] : feature_table()) {
    if (n == name) return s;
  }
  throw Error(Errc::DataError, "unknown prosodic feature " + std::string(name));
}

SegmentAnalysis analyze_segment(const corpus::Segment& seg, const AudioBuffer& audio) {
  SegmentAnalysis a;
  a.summary.segment_id = seg.segment_id;
  a.summary.speaker = seg.speaker;
  a.summary.t_start = seg.t_start;
  a.summary.t_end = seg.t_end;

  bool have_audio = !audio.samples.empty();
  if (have_audio) {
    try {
      a.pitch = track_pitch_adaptive(audio);
    } catch (const Error& e) {
      if (e.code() != Errc::AudioTooShort) throw;
    }
    try {
      a.intensity = intensity_track(audio);
    } catch (const Error& e) {
      if (e.code() != Errc::AudioTooShort) throw;
      have_audio = false;
    }
  }

  FeatureVector& fv = a.local;
  fv.append(pitch_stats(a.pitch));
  fv.append(intensity_stats(a.intensity));

  std::optional<VoiceQuality> vq;
  if (a.pitch.size() > 0) {
    try {
      vq = voice_quality(audio, a.pitch);
    } catch (const Error& e) {
      if (e.code() != Errc::InsufficientVoicing) throw;
    }
  }
  fv.set_optional("jitter", vq ? std::optional(vq->jitter) : std::nullopt);
  fv.set_optional("shimmer", vq ? std::optional(vq->shimmer) : std::nullopt);
  fv.set_optional("hnr", vq ? std::optional(vq->hnr) : std::nullopt);

  if (have_audio) {
    PauseAnalysis pa = detect_pauses(a.intensity, seg.duration());
    a.pauses = pa.pauses;
    fv.append(pa.features);
  } else {
    for (const char* name : {"pause_num", "pause_total", "pause_mean", "pause_short", "pause_medium",
                             "pause_long", "pause_initial", "pause_medial", "pause_final", "pause_rel_longest"}) {
      fv.set_missing(name);
    }
  }

  fv.set("duration", seg.duration());
  if (have_audio) {
    const SpeechTiming st = speech_timing(seg.duration(), a.pauses, syllable_nuclei(a.intensity, a.pitch).size());
    fv.set("speech_rate", st.speech_rate);
    fv.set_optional("articulation_rate", st.articulation_rate);
  } else {
    fv.set_missing("speech_rate");
    fv.set_missing("articulation_rate");
  }

  const FeatureVector words = word_level_prosody(seg, {}, a.pitch, a.intensity);
  for (const char* name : {"wat_pitch_mean", "wat_pitch_max", "wat_int_mean", "wat_int_max"}) {
    fv.set_optional(name, words.get(name));
  }

  a.slopes = boundary_slopes(a.pitch, a.intensity);
  fv.set_optional("pitch_start_slope", a.slopes.pitch_start);
  fv.set_optional("pitch_end_slope", a.slopes.pitch_end);
  fv.set_optional("int_start_slope", a.slopes.intensity_start);
  fv.set_optional("int_end_slope", a.slopes.intensity_end);

  a.summary.pitch_mean = fv.get("pitch_mean");
  a.summary.intensity_mean = fv.get("int_mean");
  return a;
}

FeatureVector extract_prosodic(const corpus::Segment& seg, const SegmentAnalysis& self, const ProsodyContext& ctx) {
  FeatureVector fv = self.local;

  const FeatureVector words = word_level_prosody(seg, ctx.repeated_words, self.pitch, self.intensity);
  for (const char* name : {"rep_pitch_mean", "rep_pitch_max", "rep_int_mean", "rep_int_max"}) {
    fv.set_optional(name, words.get(name));
  }

  std::optional<SpeakerBaseline> baseline;
  try {
    baseline = speaker_baseline(ctx.history, self.summary);
  } catch (const Error& e) {
    if (e.code() != Errc::NoHistory) throw;
  }
  auto normalized = [&](const char* prefix, std::optional<double> value, Channel channel) {
    const std::string p(prefix);
    const std::optional<ChannelStats>* stats = nullptr;
    if (baseline) stats = channel == Channel::Pitch ? &baseline->pitch : &baseline->intensity;
    if (value && stats && stats->has_value()) {
      const Normalized n = normalize_to_baseline(*value, **stats);
      fv.set(p + "_z", n.z_score);
      fv.set(p + "_rel_change", n.rel_change);
      fv.set(p + "_range_pos", n.range_pos);
    } else {
      // Without history the neutral position is imputed.
      fv.set_missing(p + "_z");
      fv.set_missing(p + "_rel_change");
      fv.set_missing(p + "_range_pos");
      fv.mutable_values()[*fv.index(p + "_z")] = 0.0;
      fv.mutable_values()[*fv.index(p + "_rel_change")] = 0.0;
      fv.mutable_values()[*fv.index(p + "_range_pos")] = 0.5;
    }
  };
  normalized("pitch", self.summary.pitch_mean, Channel::Pitch);
  normalized("int", self.summary.intensity_mean, Channel::Intensity);

  const std::optional<double> none;
  const Transition tp = slope_transition(ctx.prev ? ctx.prev->slopes.pitch_end : none, self.slopes.pitch_start);
  const Transition ti = slope_transition(ctx.prev ? ctx.prev->slopes.intensity_end : none, self.slopes.intensity_start);
  fv.set_optional("pitch_end_slope_prev", tp.end_slope);
  fv.set_optional("pitch_transition_prev", tp.transition);
  fv.set_optional("int_end_slope_prev", ti.end_slope);
  fv.set_optional("int_transition_prev", ti.transition);
  fv.set_optional("latency_prev", ctx.latency_prev);

  const Transition np = slope_transition(self.slopes.pitch_end, ctx.next ? ctx.next->slopes.pitch_start : none);
  const Transition ni = slope_transition(self.slopes.intensity_end, ctx.next ? ctx.next->slopes.intensity_start : none);
  fv.set_optional("pitch_start_slope_next", np.start_slope);
  fv.set_optional("pitch_transition_next", np.transition);
  fv.set_optional("int_start_slope_next", ni.start_slope);
  fv.set_optional("int_transition_next", ni.transition);
  fv.set_optional("latency_next", ctx.latency_next);

  return fv.reordered(prosodic_feature_names());
}

}  // namespace oir::prosody

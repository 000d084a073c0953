#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace oir::audio {

struct AudioBuffer {
  std::vector<float> samples;  // [-1, 1]
  int sample_rate = 16000;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  // Throws BadAudio unless non-empty with sample_rate >= 16000.
  void check() const;
};

// Interleaved multi-channel PCM.
struct WavData {
  int sample_rate = 16000;
  int channels = 1;
  std::vector<float> interleaved;

  std::size_t frames() const { return channels ? interleaved.size() / channels : 0; }
  AudioBuffer channel(int c) const;
};

// RIFF/WAVE, PCM 16-bit. Float samples are clipped to [-1, 1] and rounded
// to the nearest integer code.
void write_wav(const std::filesystem::path& path, const WavData& wav);
WavData read_wav(const std::filesystem::path& path);

// Slice [t0, t1) seconds of a buffer, clamped to its extent.
AudioBuffer slice(const AudioBuffer& in, double t0, double t1);

// Thread-safe cache of decoded WAV files, keyed by path.
class AudioSource {
 public:
  explicit AudioSource(std::filesystem::path base_dir = {}) : base_(std::move(base_dir)) {}

  // Audio of one channel of `path` between t0 and t1 seconds.
  AudioBuffer segment(const std::string& path, int channel, double t0, double t1);
  std::shared_ptr<const WavData> load(const std::string& path);
  // Registers decoded audio under `path` so no file read happens.
  void put(const std::string& path, WavData wav);

 private:
  std::filesystem::path base_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const WavData>> cache_;
};

}  // namespace oir::audio

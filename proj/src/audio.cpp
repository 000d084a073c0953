#include "oir/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "oir/error.hpp"

namespace oir::audio {

void AudioBuffer::check() const {
  if (samples.empty()) throw Error(Errc::BadAudio, "empty audio buffer");
  if (sample_rate < 16000) {
    throw Error(Errc::BadAudio, "sample rate " + std::to_string(sample_rate) + " Hz is below 16 kHz");
  }
}

AudioBuffer WavData::channel(int c) const {
  if (c < 0 || c >= channels) {
    throw Error(Errc::BadAudio, "channel " + std::to_string(c) + " out of range");
  }
  AudioBuffer out;
  out.sample_rate = sample_rate;
  const std::size_t n = frames();
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = interleaved[i * channels + c];
  return out;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ofstream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint16_t get_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

}  // namespace

void write_wav(const std::filesystem::path& path, const WavData& wav) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wav.interleaved.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, static_cast<std::uint16_t>(wav.channels));
  put_u32(out, static_cast<std::uint32_t>(wav.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wav.sample_rate * wav.channels * 2));
  put_u16(out, static_cast<std::uint16_t>(wav.channels * 2));
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  std::vector<unsigned char> pcm(data_bytes);
  for (std::size_t i = 0; i < wav.interleaved.size(); ++i) {
    const float x = std::clamp(wav.interleaved[i], -1.0f, 1.0f);
    const auto code = static_cast<std::int16_t>(std::lround(x * 32767.0f));
    const auto u = static_cast<std::uint16_t>(code);
    pcm[2 * i] = static_cast<unsigned char>(u);
    pcm[2 * i + 1] = static_cast<unsigned char>(u >> 8);
  }
  out.write(reinterpret_cast<const char*>(pcm.data()), static_cast<std::streamsize>(pcm.size()));
}

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(Errc::BadAudio, path.string() + " is not a RIFF/WAVE file");
  }
  WavData wav;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = get_u32(&bytes[pos + 4]);
    const unsigned char* body = &bytes[pos + 8];
    if (pos + 8 + size > bytes.size()) throw Error(Errc::BadAudio, path.string() + ": truncated chunk");
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (size < 16) throw Error(Errc::BadAudio, path.string() + ": short fmt chunk");
      const std::uint16_t format = get_u16(body);
      wav.channels = get_u16(body + 2);
      wav.sample_rate = static_cast<int>(get_u32(body + 4));
      const std::uint16_t bits = get_u16(body + 14);
      if (format != 1 || bits != 16 || wav.channels < 1) {
        throw Error(Errc::BadAudio, path.string() + ": only PCM 16-bit is supported");
      }
      have_fmt = true;
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      if (!have_fmt) throw Error(Errc::BadAudio, path.string() + ": data before fmt");
      const std::size_t n = size / 2;
      wav.interleaved.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto code = static_cast<std::int16_t>(get_u16(body + 2 * i));
        wav.interleaved[i] = static_cast<float>(code) / 32767.0f;
      }
      return wav;
    }
    pos += 8 + size + (size & 1);
  }
  throw Error(Errc::BadAudio, path.string() + ": no data chunk");
}

AudioBuffer slice(const AudioBuffer& in, double t0, double t1) {
  AudioBuffer out;
  out.sample_rate = in.sample_rate;
  const auto n = static_cast<long long>(in.samples.size());
  const long long a = std::clamp<long long>(std::llround(t0 * in.sample_rate), 0, n);
  const long long b = std::clamp<long long>(std::llround(t1 * in.sample_rate), a, n);
  out.samples.assign(in.samples.begin() + a, in.samples.begin() + b);
  return out;
}

std::shared_ptr<const WavData> AudioSource::load(const std::string& path) {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(path); it != cache_.end()) return it->second;
  }
  std::filesystem::path p(path);
  if (p.is_relative() && !base_.empty()) p = base_ / p;
  auto wav = std::make_shared<const WavData>(read_wav(p));
  std::lock_guard lock(mu_);
  return cache_.emplace(path, std::move(wav)).first->second;
}

void AudioSource::put(const std::string& path, WavData wav) {
  std::lock_guard lock(mu_);
  cache_[path] = std::make_shared<const WavData>(std::move(wav));
}

AudioBuffer AudioSource::segment(const std::string& path, int channel, double t0, double t1) {
  auto wav = load(path);
  if (channel < 0 || channel >= wav->channels) {
    throw Error(Errc::BadAudio, path + ": channel " + std::to_string(channel) + " out of range");
  }
  AudioBuffer out;
  out.sample_rate = wav->sample_rate;
  const auto n = static_cast<long long>(wav->frames());
  const long long a = std::clamp<long long>(std::llround(t0 * wav->sample_rate), 0, n);
  const long long b = std::clamp<long long>(std::llround(t1 * wav->sample_rate), a, n);
  out.samples.resize(static_cast<std::size_t>(b - a));
  for (long long i = a; i < b; ++i) {
    out.samples[static_cast<std::size_t>(i - a)] = wav->interleaved[static_cast<std::size_t>(i) * wav->channels + channel];
  }
  return out;
}

}  // namespace oir::audio

#include "oir/embeddings.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "oir/context.hpp"
#include "oir/error.hpp"
#include "oir/rng.hpp"

namespace oir::embeddings {

std::string_view modality_name(Modality m) { return m == Modality::Text ? "text" : "audio"; }

void EmbeddingStore::insert(std::string id, std::vector<float> v) {
  if (v.size() != dim_) {
    throw Error(Errc::DimMismatch, "vector for " + id + " has length " + std::to_string(v.size()) +
                                       ", store dim is " + std::to_string(dim_));
  }
  for (float x : v) {
    if (!std::isfinite(x)) throw Error(Errc::DataError, "non-finite embedding value for " + id);
  }
  vectors_[std::move(id)] = std::move(v);
}

const std::vector<float>& EmbeddingStore::get(const std::string& id) const {
  auto it = vectors_.find(id);
  if (it == vectors_.end()) {
    throw Error(Errc::MissingSegment, std::string(modality_name(modality_)) + " embedding missing for " + id);
  }
  return it->second;
}

const std::vector<float>* EmbeddingStore::find(const std::string& id) const {
  auto it = vectors_.find(id);
  return it == vectors_.end() ? nullptr : &it->second;
}

namespace {

static_assert(std::endian::native == std::endian::little, "EMB1 I/O assumes a little-endian host");

class Writer {
 public:
  std::vector<std::uint8_t> out;
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    if (s.size() > 0xFFFF) throw Error(Errc::DataError, "string too long for EMB1: " + s.substr(0, 32));
    put(static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint16_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void get_floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(Errc::TruncatedFile, "EMB1 payload ends early");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_emb1(const EmbeddingStore& store) {
  Writer w;
  w.out.insert(w.out.end(), {'E', 'M', 'B', '1'});
  w.put<std::uint16_t>(1);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(store.modality()));
  w.put<std::uint8_t>(0);
  w.put<std::uint32_t>(store.dim());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  w.put_string(store.model_tag());
  for (const auto& [id, v] : store.vectors()) {
    w.put_string(id);
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    w.out.insert(w.out.end(), p, p + v.size() * sizeof(float));
  }
  return std::move(w.out);
}

EmbeddingStore parse_emb1(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "EMB1", 4) != 0) {
    throw Error(Errc::BadMagic, "not an EMB1 file");
  }
  Reader r(bytes.subspan(4));
  const auto version = r.get<std::uint16_t>();
  if (version != 1) throw Error(Errc::BadMagic, "unsupported EMB1 version " + std::to_string(version));
  const auto modality = r.get<std::uint8_t>();
  if (modality > 1) throw Error(Errc::DataError, "unknown EMB1 modality " + std::to_string(modality));
  r.get<std::uint8_t>();
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint32_t>();
  if (dim == 0) throw Error(Errc::DimMismatch, "EMB1 header declares dim 0");
  EmbeddingStore store(static_cast<Modality>(modality), dim, r.get_string());
  std::vector<float> v(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id = r.get_string();
    r.get_floats(v.data(), dim);
    if (store.contains(id)) throw Error(Errc::DataError, "duplicate EMB1 id " + id);
    store.insert(std::move(id), v);
  }
  if (!r.done()) throw Error(Errc::DimMismatch, "EMB1 payload longer than dim x count records");
  return store;
}

void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = serialize_emb1(store);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_emb1(bytes);
}

namespace {

void l2_normalize(std::vector<float>& v) {
  double n = 0;
  for (float x : v) n += static_cast<double>(x) * x;
  if (n <= 0) return;
  const auto s = static_cast<float>(1.0 / std::sqrt(n));
  for (float& x : v) x *= s;
}

}  // namespace

EmbeddingStore hashed_text_embeddings(const std::map<std::string, std::string>& texts, std::uint32_t dim) {
  EmbeddingStore store(Modality::Text, dim, "fixture:hashed-bow;pool=sum-l2");
  for (const auto& [id, text] : texts) {
    std::vector<float> v(dim, 0.0f);
    for (const auto& tok : context::whitespace_tokens(text)) {
      const std::uint64_t h = fnv1a64(tok);
      v[h % dim] += (h >> 63) ? 1.0f : -1.0f;
    }
    l2_normalize(v);
    store.insert(id, std::move(v));
  }
  return store;
}

EmbeddingStore feature_audio_embeddings(const std::map<std::string, std::vector<double>>& summaries,
                                        std::uint32_t dim, std::uint64_t seed) {
  EmbeddingStore store(Modality::Audio, dim, "fixture:projected-summary;pool=time-mean");
  std::size_t in_dim = summaries.empty() ? 0 : summaries.begin()->second.size();
  Rng proj_rng(seed);
  std::vector<double> proj(in_dim * dim);
  for (double& w : proj) w = proj_rng.normal();
  for (const auto& [id, s] : summaries) {
    if (s.size() != in_dim) throw Error(Errc::DimMismatch, "summary length differs for " + id);
    Rng noise(seed ^ fnv1a64(id));
    std::vector<float> v(dim);
    for (std::uint32_t d = 0; d < dim; ++d) {
      double acc = 0.5 * noise.normal();
      for (std::size_t k = 0; k < in_dim; ++k) acc += proj[k * dim + d] * s[k];
      v[d] = static_cast<float>(acc);
    }
    store.insert(id, std::move(v));
  }
  return store;
}

EmbeddingStore random_embeddings(Modality modality, const std::vector<std::string>& ids, std::uint32_t dim,
                                 std::uint64_t seed) {
  EmbeddingStore store(modality, dim, "fixture:gaussian");
  for (const auto& id : ids) {
    Rng rng(seed ^ fnv1a64(id));
    std::vector<float> v(dim);
    for (float& x : v) x = static_cast<float>(rng.normal());
    store.insert(id, std::move(v));
  }
  return store;
}

}  // namespace oir::embeddings

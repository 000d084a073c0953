#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oir::embeddings {

enum class Modality : std::uint8_t { Text = 0, Audio = 1 };

std::string_view modality_name(Modality m);

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(Modality modality, std::uint32_t dim, std::string model_tag)
      : modality_(modality), dim_(dim), tag_(std::move(model_tag)) {}

  Modality modality() const { return modality_; }
  std::uint32_t dim() const { return dim_; }
  const std::string& model_tag() const { return tag_; }
  std::size_t size() const { return vectors_.size(); }
  const std::map<std::string, std::vector<float>>& vectors() const { return vectors_; }

  // Throws DimMismatch on a wrong length and DataError on non-finite values.
  void insert(std::string id, std::vector<float> v);

  bool contains(const std::string& id) const { return vectors_.count(id) != 0; }
  // Throws MissingSegment when absent.
  const std::vector<float>& get(const std::string& id) const;
  // Null when absent; the caller excludes the segment.
  const std::vector<float>* find(const std::string& id) const;

  bool operator==(const EmbeddingStore&) const = default;

 private:
  Modality modality_ = Modality::Text;
  std::uint32_t dim_ = 0;
  std::string tag_;
  std::map<std::string, std::vector<float>> vectors_;
};

// EMB1 binary layout, little-endian throughout: "EMB1", u16 version (1),
// u8 modality, u8 reserved, u32 dim, u32 count, u16-prefixed model tag, then
// count records of u16-prefixed id and dim float32 values. Records are
// written in id order so serialization is canonical.
std::vector<std::uint8_t> serialize_emb1(const EmbeddingStore& store);
EmbeddingStore parse_emb1(std::span<const std::uint8_t> bytes);
void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_embeddings(const std::filesystem::path& path);

// Fixtures for runs without the exporter. Text vectors are a signed hashed
// bag of words over the given texts (L2-normalized); audio vectors are
// seeded Gaussian noise mixed with a few per-id scalar summaries.
EmbeddingStore hashed_text_embeddings(const std::map<std::string, std::string>& texts, std::uint32_t dim);
EmbeddingStore feature_audio_embeddings(const std::map<std::string, std::vector<double>>& summaries,
                                        std::uint32_t dim, std::uint64_t seed);
EmbeddingStore random_embeddings(Modality modality, const std::vector<std::string>& ids, std::uint32_t dim,
                                 std::uint64_t seed);

}  // namespace oir::embeddings

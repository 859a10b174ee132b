#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvgmn/model.hpp"
#include "mvgmn/random.hpp"
#include "mvgmn/tensor.hpp"

namespace mvgmn {

// ---------------------------------------------------------------------------
// Feature files
//
// Little-endian layout:
//   "MVGF" | u16 version (1) | u8 dtype (1 = f32, 2 = f64) | u32 rank |
//   u32 dims[rank] | payload, row-major

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

inline constexpr std::uint16_t kFeatureFileVersion = 1;

/// Encodes one tensor block. F32 rounds each value to nearest float.
std::string encode_tensor(const Tensor& tensor, DType dtype = DType::F32);
/// Decodes one block starting at `bytes[0]`; `base_offset` is only used in
/// error messages. Sets `consumed` to the block length.
Tensor decode_tensor(std::string_view bytes, std::uint64_t base_offset, std::size_t& consumed);

void write_feature_file(const std::string& path, const Tensor& tensor, DType dtype = DType::F32);
Tensor read_feature_file(const std::string& path);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::string_view bytes);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::size_t views = 3;
  std::size_t steps = 8;          // RGB frames per view
  std::size_t skeleton_ratio = 2;  // skeleton frames per RGB frame
  std::size_t patches = 4;
  std::size_t rgb_dim = 32;
  std::size_t skeleton_dim = 32;
  std::size_t classes = 10;
  std::size_t subjects = 10;
  std::size_t samples_per_class = 200;
  double noise = 0.3;
  std::uint64_t seed = 0;

  std::size_t skeleton_steps() const { return steps * skeleton_ratio; }
  std::size_t sample_count() const { return classes * samples_per_class; }
  void validate() const;
  std::string to_json() const;
  static SyntheticSpec from_json(std::string_view text);

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct ViewPaths {
  std::string rgb;  // relative to the manifest directory
  std::string sk;
};

struct SampleRecord {
  std::size_t id = 0;
  std::size_t label = 0;
  std::size_t subject = 0;
  std::vector<ViewPaths> views;
};

/// Per-view encoder outputs of one sample.
struct SampleData {
  std::vector<Tensor> rgb;  // per view [T, N_p, D_rgb]
  std::vector<Tensor> sk;   // per view [T_sk, D_sk]
};

struct Manifest {
  int version = 1;
  SyntheticSpec spec;
  std::vector<SampleRecord> samples;

  std::string to_json() const;
  static Manifest from_json(std::string_view text);
};

struct SyntheticDataset {
  SyntheticSpec spec;
  std::vector<SampleRecord> records;  // paths filled by write_dataset
  std::vector<SampleData> data;
  std::vector<Tensor> view_maps;      // per view, orthogonal [D_rgb, D_rgb]
  std::vector<Tensor> skeleton_maps;  // per view, [D_sk, D_rgb]
};

/// Every class owns a latent trajectory whose coordinates are sinusoids with
/// class-specific frequency and phase. A subject rescales and offsets it.
/// View v sees the latent through an orthogonal map; each RGB patch adds a
/// fixed zero-mean pattern; the skeleton stream is another projection of the
/// same trajectory sampled twice as densely. Gaussian noise is added last,
/// and values are rounded to f32 so memory and files agree bit for bit.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Latent trajectory of a class/subject pair at normalised time tau in [0, 1).
Tensor synthetic_latent(const SyntheticSpec& spec, std::size_t label, std::size_t subject,
                        double tau);

/// Writes feature files under `dir/samples` plus `dir/manifest.json`.
Manifest write_dataset(SyntheticDataset& dataset, const std::string& dir);

Manifest load_manifest(const std::string& path);
/// Manifest plus every referenced feature file, loaded into memory.
struct Dataset {
  Manifest manifest;
  std::vector<SampleData> samples;  // indexed like manifest.samples
};
Dataset load_dataset(const std::string& manifest_path);
/// In-memory view of a generated dataset; no files involved.
Dataset as_dataset(const SyntheticDataset& dataset);

/// 64-bit FNV-1a over the manifest text and every feature file in order.
std::uint64_t dataset_digest(const std::string& manifest_path);

// ---------------------------------------------------------------------------
// Splits

enum class Protocol { CrossSubject, CrossView };

std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view name);

struct Split {
  Protocol protocol = Protocol::CrossSubject;
  std::vector<std::size_t> train;  // indices into manifest.samples
  std::vector<std::size_t> test;
  std::vector<std::size_t> test_subjects;  // cross_subject only
  std::optional<std::size_t> masked_view;  // cross_view only, applied to test samples
};

struct SplitOptions {
  /// Cross-subject holdout; defaults to the last max(1, subjects / 5) ids.
  std::vector<std::size_t> holdout_subjects;
  /// Cross-view: view zeroed at test time.
  std::size_t masked_view = 1;
  /// Cross-view: every `test_stride`-th sample (id % stride == stride - 1) is held out.
  std::size_t test_stride = 5;
};

Split make_splits(const Manifest& manifest, Protocol protocol, const SplitOptions& options = {});

/// Builds the fusion input of a sample: one frame per segment for each
/// stream, skeleton tokens aligned to RGB frames, views in canonical order.
/// A masked view has all of its features set to zero.
ModelInput make_model_input(const SampleData& sample, std::size_t steps, Rng& sampler,
                            std::optional<std::size_t> masked_view = std::nullopt);

}  // namespace mvgmn

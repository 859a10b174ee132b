#include "mvgmn/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "mvgmn/errors.hpp"

namespace mvgmn {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Feature files

namespace {

constexpr char kMagic[4] = {'M', 'V', 'G', 'F'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::string_view bytes, std::size_t pos, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_tensor(const Tensor& tensor, DType dtype) {
  if (!tensor.all_finite()) throw NumericError("refusing to encode a non-finite tensor");
  std::string out(kMagic, 4);
  put_u16(out, kFeatureFileVersion);
  out.push_back(static_cast<char>(dtype));
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  const std::size_t width = dtype == DType::F32 ? 4 : 8;
  out.reserve(out.size() + width * tensor.size());
  for (double v : tensor.data()) {
    if (dtype == DType::F32) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Tensor decode_tensor(std::string_view bytes, std::uint64_t base_offset, std::size_t& consumed) {
  auto need = [&](std::size_t pos, std::size_t n, const char* what) {
    if (bytes.size() < pos + n) {
      throw FormatError(std::string("truncated ") + what + ": expected " + std::to_string(pos + n) +
                            " bytes, have " + std::to_string(bytes.size()),
                        base_offset + bytes.size());
    }
  };
  need(0, 4, "header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected MVGF", base_offset);
  need(4, 2, "header");
  const auto version = static_cast<std::uint16_t>(get_le(bytes, 4, 2));
  if (version != kFeatureFileVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version), base_offset + 4);
  }
  need(6, 1, "header");
  const auto code = static_cast<std::uint8_t>(bytes[6]);
  if (code != static_cast<std::uint8_t>(DType::F32) && code != static_cast<std::uint8_t>(DType::F64)) {
    throw FormatError("unknown dtype code " + std::to_string(code), base_offset + 6);
  }
  const std::size_t width = code == static_cast<std::uint8_t>(DType::F32) ? 4 : 8;
  need(7, 4, "header");
  const auto rank = static_cast<std::size_t>(get_le(bytes, 7, 4));
  if (rank > 16) throw FormatError("implausible rank " + std::to_string(rank), base_offset + 7);
  need(11, 4 * rank, "dims");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = static_cast<std::size_t>(get_le(bytes, 11 + 4 * i, 4));
  const std::size_t header = 11 + 4 * rank;
  const std::size_t count = shape_size(shape);
  if (bytes.size() < header + width * count) {
    throw FormatError("truncated payload: expected " + std::to_string(width * count) +
                          " bytes, have " + std::to_string(bytes.size() - header),
                      base_offset + bytes.size());
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t pos = header + width * i;
    if (width == 4) {
      data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, pos, 4)));
    } else {
      data[i] = std::bit_cast<double>(get_le(bytes, pos, 8));
    }
  }
  consumed = header + width * count;
  return Tensor(std::move(shape), std::move(data));
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

void write_feature_file(const std::string& path, const Tensor& tensor, DType dtype) {
  write_file_bytes(path, encode_tensor(tensor, dtype));
}

Tensor read_feature_file(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  std::size_t consumed = 0;
  Tensor t = decode_tensor(bytes, 0, consumed);
  if (consumed != bytes.size()) {
    throw FormatError("trailing bytes after payload in '" + path + "'", consumed);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Synthetic spec / manifest

void SyntheticSpec::validate() const {
  if (views == 0 || steps == 0 || skeleton_ratio == 0 || patches == 0 || rgb_dim == 0 ||
      skeleton_dim == 0 || subjects == 0 || samples_per_class == 0) {
    throw ConfigError("data: all sizes must be >= 1");
  }
  if (classes < 2) throw ConfigError("data.classes must be >= 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("data.noise must be >= 0");
}

std::string SyntheticSpec::to_json() const {
  return json{{"views", views},
              {"steps", steps},
              {"skeleton_ratio", skeleton_ratio},
              {"patches", patches},
              {"rgb_dim", rgb_dim},
              {"skeleton_dim", skeleton_dim},
              {"classes", classes},
              {"subjects", subjects},
              {"samples_per_class", samples_per_class},
              {"noise", noise},
              {"seed", seed}}
      .dump();
}

SyntheticSpec SyntheticSpec::from_json(std::string_view text) {
  const json j = json::parse(text);
  SyntheticSpec s;
  s.views = j.at("views").get<std::size_t>();
  s.steps = j.at("steps").get<std::size_t>();
  s.skeleton_ratio = j.at("skeleton_ratio").get<std::size_t>();
  s.patches = j.at("patches").get<std::size_t>();
  s.rgb_dim = j.at("rgb_dim").get<std::size_t>();
  s.skeleton_dim = j.at("skeleton_dim").get<std::size_t>();
  s.classes = j.at("classes").get<std::size_t>();
  s.subjects = j.at("subjects").get<std::size_t>();
  s.samples_per_class = j.at("samples_per_class").get<std::size_t>();
  s.noise = j.at("noise").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

std::string Manifest::to_json() const {
  json samples_json = json::array();
  for (const auto& s : samples) {
    json views_json = json::array();
    for (const auto& v : s.views) views_json.push_back({{"rgb", v.rgb}, {"sk", v.sk}});
    samples_json.push_back(
        {{"id", s.id}, {"label", s.label}, {"subject", s.subject}, {"views", views_json}});
  }
  json j{{"version", version}, {"spec", json::parse(spec.to_json())}, {"samples", samples_json}};
  return j.dump(1);
}

Manifest Manifest::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  Manifest m;
  m.version = j.at("version").get<int>();
  if (m.version != 1) throw FormatError("unsupported manifest version " + std::to_string(m.version), 0);
  m.spec = SyntheticSpec::from_json(j.at("spec").dump());
  for (const auto& sj : j.at("samples")) {
    SampleRecord r;
    r.id = sj.at("id").get<std::size_t>();
    r.label = sj.at("label").get<std::size_t>();
    r.subject = sj.at("subject").get<std::size_t>();
    for (const auto& vj : sj.at("views")) {
      r.views.push_back({vj.at("rgb").get<std::string>(), vj.at("sk").get<std::string>()});
    }
    m.samples.push_back(std::move(r));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Generator

namespace {

enum Stream : std::uint64_t {
  kClassStream = 1,
  kSubjectStream = 2,
  kPatchStream = 3,
  kViewStream = 4,
  kSkeletonStream = 5,
  kNoiseStream = 6,
};

std::uint64_t stream_id(Stream kind, std::uint64_t index) { return (static_cast<std::uint64_t>(kind) << 40) | index; }

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct ClassSignature {
  std::vector<double> amplitude, frequency, phase;
};

struct SubjectStyle {
  double gain = 1.0;
  std::vector<double> offset;
};

ClassSignature class_signature(const SyntheticSpec& spec, std::size_t label) {
  Rng rng(derive_seed(spec.seed, stream_id(kClassStream, label)));
  ClassSignature c;
  for (std::size_t j = 0; j < spec.rgb_dim; ++j) {
    c.amplitude.push_back(rng.uniform(0.6, 1.4));
    c.frequency.push_back(rng.uniform(0.5, 3.0));
    c.phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
  }
  return c;
}

SubjectStyle subject_style(const SyntheticSpec& spec, std::size_t subject) {
  Rng rng(derive_seed(spec.seed, stream_id(kSubjectStream, subject)));
  SubjectStyle s;
  s.gain = rng.uniform(0.85, 1.15);
  for (std::size_t j = 0; j < spec.rgb_dim; ++j) s.offset.push_back(0.1 * rng.normal());
  return s;
}

std::vector<double> latent_at(const ClassSignature& c, const SubjectStyle& s, double tau) {
  std::vector<double> out(c.amplitude.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = s.gain * c.amplitude[j] * std::sin(2.0 * std::numbers::pi * c.frequency[j] * tau + c.phase[j]) +
             s.offset[j];
  }
  return out;
}

Tensor random_orthogonal(std::size_t n, Rng& rng) {
  Tensor q({n, n});
  for (auto& v : q.data()) v = rng.normal();
  // Modified Gram-Schmidt over columns.
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

void mat_vec(const Tensor& m, const std::vector<double>& x, double* out) {
  const std::size_t rows = m.rows(), cols = m.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += m(i, j) * x[j];
    out[i] = s;
  }
}

}  // namespace

Tensor synthetic_latent(const SyntheticSpec& spec, std::size_t label, std::size_t subject, double tau) {
  const auto v = latent_at(class_signature(spec, label), subject_style(spec, subject), tau);
  return Tensor({1, v.size()}, v);
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  ds.spec = spec;

  std::vector<ClassSignature> classes;
  for (std::size_t c = 0; c < spec.classes; ++c) classes.push_back(class_signature(spec, c));
  std::vector<SubjectStyle> subjects;
  for (std::size_t s = 0; s < spec.subjects; ++s) subjects.push_back(subject_style(spec, s));

  Tensor patterns({spec.patches, spec.rgb_dim});
  {
    Rng rng(derive_seed(spec.seed, stream_id(kPatchStream, 0)));
    for (auto& v : patterns.data()) v = 0.5 * rng.normal();
    for (std::size_t j = 0; j < spec.rgb_dim; ++j) {
      double mean = 0.0;
      for (std::size_t p = 0; p < spec.patches; ++p) mean += patterns(p, j);
      mean /= static_cast<double>(spec.patches);
      for (std::size_t p = 0; p < spec.patches; ++p) patterns(p, j) -= mean;
    }
  }
  for (std::size_t v = 0; v < spec.views; ++v) {
    Rng rng(derive_seed(spec.seed, stream_id(kViewStream, v)));
    ds.view_maps.push_back(random_orthogonal(spec.rgb_dim, rng));
    Rng srng(derive_seed(spec.seed, stream_id(kSkeletonStream, v)));
    Tensor s({spec.skeleton_dim, spec.rgb_dim});
    const double k = 1.0 / std::sqrt(static_cast<double>(spec.rgb_dim));
    for (auto& x : s.data()) x = k * srng.normal();
    ds.skeleton_maps.push_back(std::move(s));
  }

  const std::size_t t_sk = spec.skeleton_steps();
  std::vector<double> mixed(std::max(spec.rgb_dim, spec.skeleton_dim));
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      SampleRecord rec;
      rec.id = c * spec.samples_per_class + i;
      rec.label = c;
      rec.subject = i % spec.subjects;
      Rng noise(derive_seed(spec.seed, stream_id(kNoiseStream, rec.id)));
      const auto& cls = classes[c];
      const auto& sub = subjects[rec.subject];

      SampleData sample;
      for (std::size_t v = 0; v < spec.views; ++v) {
        Tensor rgb({spec.steps, spec.patches, spec.rgb_dim});
        for (std::size_t t = 0; t < spec.steps; ++t) {
          const auto latent = latent_at(cls, sub, static_cast<double>(t) / static_cast<double>(spec.steps));
          mat_vec(ds.view_maps[v], latent, mixed.data());
          for (std::size_t p = 0; p < spec.patches; ++p) {
            double* row = rgb.ptr() + (t * spec.patches + p) * spec.rgb_dim;
            for (std::size_t j = 0; j < spec.rgb_dim; ++j) {
              row[j] = round_f32(mixed[j] + patterns(p, j) + spec.noise * noise.normal());
            }
          }
        }
        Tensor sk({t_sk, spec.skeleton_dim});
        for (std::size_t t = 0; t < t_sk; ++t) {
          const auto latent = latent_at(cls, sub, static_cast<double>(t) / static_cast<double>(t_sk));
          mat_vec(ds.skeleton_maps[v], latent, mixed.data());
          for (std::size_t j = 0; j < spec.skeleton_dim; ++j) {
            sk(t, j) = round_f32(mixed[j] + spec.noise * noise.normal());
          }
        }
        sample.rgb.push_back(std::move(rgb));
        sample.sk.push_back(std::move(sk));
      }
      ds.records.push_back(std::move(rec));
      ds.data.push_back(std::move(sample));
    }
  }
  return ds;
}

Manifest write_dataset(SyntheticDataset& dataset, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "samples");
  Manifest m;
  m.spec = dataset.spec;
  for (std::size_t s = 0; s < dataset.records.size(); ++s) {
    auto& rec = dataset.records[s];
    rec.views.clear();
    char stem[32];
    std::snprintf(stem, sizeof stem, "%06zu", rec.id);
    for (std::size_t v = 0; v < dataset.spec.views; ++v) {
      ViewPaths paths{"samples/" + std::string(stem) + "_v" + std::to_string(v) + "_rgb.mvgf",
                      "samples/" + std::string(stem) + "_v" + std::to_string(v) + "_sk.mvgf"};
      write_feature_file((fs::path(dir) / paths.rgb).string(), dataset.data[s].rgb[v]);
      write_feature_file((fs::path(dir) / paths.sk).string(), dataset.data[s].sk[v]);
      rec.views.push_back(std::move(paths));
    }
    m.samples.push_back(rec);
  }
  write_file_bytes((fs::path(dir) / "manifest.json").string(), m.to_json());
  return m;
}

Manifest load_manifest(const std::string& path) { return Manifest::from_json(read_file_bytes(path)); }

Dataset as_dataset(const SyntheticDataset& dataset) {
  Dataset out;
  out.manifest.spec = dataset.spec;
  out.manifest.samples = dataset.records;
  out.samples = dataset.data;
  return out;
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();
  const auto& spec = ds.manifest.spec;
  for (const auto& rec : ds.manifest.samples) {
    if (rec.views.size() != spec.views) {
      throw InputError("sample " + std::to_string(rec.id) + " lists " + std::to_string(rec.views.size()) +
                       " views, manifest spec says " + std::to_string(spec.views));
    }
    SampleData sample;
    for (const auto& v : rec.views) {
      Tensor rgb = read_feature_file((root / v.rgb).string());
      Tensor sk = read_feature_file((root / v.sk).string());
      if (rgb.shape() != Shape{spec.steps, spec.patches, spec.rgb_dim} ||
          sk.shape() != Shape{spec.skeleton_steps(), spec.skeleton_dim}) {
        throw InputError("feature files of sample " + std::to_string(rec.id) +
                         " have inconsistent dimensions");
      }
      sample.rgb.push_back(std::move(rgb));
      sample.sk.push_back(std::move(sk));
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

std::uint64_t dataset_digest(const std::string& manifest_path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  const std::string text = read_file_bytes(manifest_path);
  feed(text);
  const fs::path root = fs::path(manifest_path).parent_path();
  for (const auto& rec : Manifest::from_json(text).samples) {
    for (const auto& v : rec.views) {
      feed(read_file_bytes((root / v.rgb).string()));
      feed(read_file_bytes((root / v.sk).string()));
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Splits and model inputs

std::string_view to_string(Protocol p) {
  return p == Protocol::CrossSubject ? "cross_subject" : "cross_view";
}

Protocol parse_protocol(std::string_view name) {
  if (name == "cross_subject") return Protocol::CrossSubject;
  if (name == "cross_view") return Protocol::CrossView;
  throw ConfigError("unknown protocol '" + std::string(name) +
                    "' (expected cross_subject or cross_view)");
}

Split make_splits(const Manifest& manifest, Protocol protocol, const SplitOptions& options) {
  Split split;
  split.protocol = protocol;
  const auto& spec = manifest.spec;
  if (protocol == Protocol::CrossSubject) {
    if (spec.subjects < 2) throw ConfigError("cross_subject split needs at least 2 subjects");
    std::vector<std::size_t> holdout = options.holdout_subjects;
    if (holdout.empty()) {
      const std::size_t n = std::max<std::size_t>(1, spec.subjects / 5);
      for (std::size_t s = spec.subjects - n; s < spec.subjects; ++s) holdout.push_back(s);
    }
    std::sort(holdout.begin(), holdout.end());
    if (holdout.size() >= spec.subjects) throw ConfigError("cross_subject holdout leaves no training subjects");
    for (std::size_t s : holdout) {
      if (s >= spec.subjects) throw ConfigError("holdout subject " + std::to_string(s) + " does not exist");
    }
    split.test_subjects = holdout;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
      const bool held = std::binary_search(holdout.begin(), holdout.end(), manifest.samples[i].subject);
      (held ? split.test : split.train).push_back(i);
    }
  } else {
    if (spec.views < 2) throw ConfigError("cross_view split needs at least 2 views");
    if (options.masked_view >= spec.views) {
      throw ConfigError("masked view " + std::to_string(options.masked_view) + " does not exist");
    }
    if (options.test_stride < 2) throw ConfigError("cross_view test stride must be >= 2");
    split.masked_view = options.masked_view;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
      const bool held = manifest.samples[i].id % options.test_stride == options.test_stride - 1;
      (held ? split.test : split.train).push_back(i);
    }
  }
  return split;
}

ModelInput make_model_input(const SampleData& sample, std::size_t steps, Rng& sampler,
                            std::optional<std::size_t> masked_view) {
  ModelInput input;
  input.views = sample.rgb.size();
  input.steps = steps;
  if (sample.sk.size() != input.views || input.views == 0) {
    throw InputError("sample must carry RGB and skeleton features for every view");
  }
  for (std::size_t v = 0; v < input.views; ++v) {
    const Tensor& rgb = sample.rgb[v];
    const Tensor& sk = sample.sk[v];
    if (rgb.rank() != 3 || sk.rank() != 2) throw DimensionError("unexpected feature ranks");
    const std::size_t ratio_num = sk.rows();
    const std::size_t frames = rgb.dim(0);
    if (frames == 0 || ratio_num % frames != 0) {
      throw ConfigError("skeleton frame count is not an integer multiple of RGB frame count");
    }
    const std::size_t sk_steps = steps * (ratio_num / frames);
    const auto rgb_idx = sample_segments(frames, steps, sampler);
    const auto sk_idx = sample_segments(sk.rows(), sk_steps, sampler);

    const std::size_t n_p = rgb.dim(1), d_rgb = rgb.dim(2), d_sk = sk.cols();
    Tensor rgb_sel({steps, n_p, d_rgb});
    for (std::size_t t = 0; t < steps; ++t)
      std::copy_n(rgb.ptr() + rgb_idx[t] * n_p * d_rgb, n_p * d_rgb, rgb_sel.ptr() + t * n_p * d_rgb);
    Tensor sk_sel({sk_steps, d_sk});
    for (std::size_t t = 0; t < sk_steps; ++t)
      std::copy_n(sk.ptr() + sk_idx[t] * d_sk, d_sk, sk_sel.ptr() + t * d_sk);
    if (masked_view && *masked_view == v) {
      rgb_sel.fill(0.0);
      sk_sel.fill(0.0);
    }
    auto frames_v = align_tokens(sk_sel, rgb_sel);
    for (auto& f : frames_v) input.frames.push_back(std::move(f));
  }
  return input;
}

}  // namespace mvgmn

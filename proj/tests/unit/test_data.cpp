#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "mvgmn/data.hpp"
#include "mvgmn/errors.hpp"
#include "oracles.hpp"

namespace mvgmn {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.views = 2;
  s.steps = 4;
  s.patches = 3;
  s.rgb_dim = 6;
  s.skeleton_dim = 5;
  s.classes = 3;
  s.subjects = 4;
  s.samples_per_class = 8;
  s.seed = 5;
  return s;
}

TEST(FeatureFile, TwoByThreeZerosLayout) {
  const std::string bytes = encode_tensor(Tensor({2, 3}));
  ASSERT_EQ(bytes.size(), 19u + 24u);
  EXPECT_EQ(bytes.substr(0, 4), "MVGF");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 1);
  const unsigned char rank_and_dims[12] = {2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0};
  EXPECT_EQ(std::memcmp(bytes.data() + 7, rank_and_dims, 12), 0);
  for (std::size_t i = 19; i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 0);

  TempDir dir("mvgmn_unit_ff");
  write_feature_file(dir.file("z.mvgf"), Tensor({2, 3}));
  EXPECT_EQ(read_file_bytes(dir.file("z.mvgf")), bytes);
  EXPECT_EQ(read_feature_file(dir.file("z.mvgf")), Tensor({2, 3}));
}

TEST(FeatureFile, LittleEndianPayload) {
  const std::string bytes = encode_tensor(Tensor({1, 1}, {1.0}));
  const unsigned char one[4] = {0x00, 0x00, 0x80, 0x3f};
  EXPECT_EQ(std::memcmp(bytes.data() + 19, one, 4), 0);
}

TEST(FeatureFile, TruncatedPayloadReportsByteCounts) {
  const std::string bytes = encode_tensor(Tensor({2, 3}));
  std::size_t consumed = 0;
  try {
    decode_tensor(std::string_view(bytes).substr(0, bytes.size() - 4), 0, consumed);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("24"), std::string::npos) << what;
    EXPECT_NE(what.find("20"), std::string::npos) << what;
  }
}

TEST(FeatureFile, MalformedHeadersAreFormatErrors) {
  std::string bytes = encode_tensor(Tensor({2, 3}));
  std::size_t consumed = 0;
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_tensor(bad, 0, consumed), FormatError);
  bad = bytes;
  bad[4] = 9;
  try {
    decode_tensor(bad, 0, consumed);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  bad = bytes;
  bad[6] = 7;
  EXPECT_THROW(decode_tensor(bad, 0, consumed), FormatError);
  EXPECT_THROW(decode_tensor(bytes.substr(0, 9), 0, consumed), FormatError);

  TempDir dir("mvgmn_unit_ff_trail");
  write_file_bytes(dir.file("t.mvgf"), bytes + "x");
  EXPECT_THROW(read_feature_file(dir.file("t.mvgf")), FormatError);
  EXPECT_THROW(read_feature_file(dir.file("missing.mvgf")), InputError);
}

TEST(FeatureFile, RandomTensorsRoundTripBitwise) {
  Rng rng(51);
  TempDir dir("mvgmn_unit_ff_rt");
  for (int trial = 0; trial < 100; ++trial) {
    Shape shape;
    const std::size_t rank = testing::random_between(rng, 1, 4);
    for (std::size_t r = 0; r < rank; ++r) shape.push_back(testing::random_between(rng, 1, 5));
    Tensor t = random_tensor(shape, rng, -1e3, 1e3);
    const DType dtype = trial % 2 ? DType::F64 : DType::F32;
    if (dtype == DType::F32)
      for (double& v : t.data()) v = static_cast<float>(v);
    const std::string path = dir.file("r.mvgf");
    write_feature_file(path, t, dtype);
    const Tensor back = read_feature_file(path);
    ASSERT_EQ(back.shape(), t.shape());
    ASSERT_EQ(std::memcmp(back.ptr(), t.ptr(), t.size() * sizeof(double)), 0);
    EXPECT_EQ(encode_tensor(back, dtype), read_file_bytes(path));
  }
}

TEST(FeatureFile, NonFiniteValuesAreRejected) {
  EXPECT_THROW(encode_tensor(Tensor({1, 2}, {1.0, NAN})), NumericError);
}

TEST(Synthetic, SameSeedGivesIdenticalFiles) {
  const SyntheticSpec spec = small_spec();
  TempDir a("mvgmn_unit_syn_a"), b("mvgmn_unit_syn_b");
  SyntheticDataset da = generate_synthetic(spec), db = generate_synthetic(spec);
  write_dataset(da, a.path.string());
  write_dataset(db, b.path.string());
  EXPECT_EQ(dataset_digest(a.file("manifest.json")), dataset_digest(b.file("manifest.json")));
  EXPECT_EQ(read_file_bytes(a.file("manifest.json")), read_file_bytes(b.file("manifest.json")));

  SyntheticSpec other = spec;
  other.seed = 6;
  TempDir c("mvgmn_unit_syn_c");
  SyntheticDataset dc = generate_synthetic(other);
  write_dataset(dc, c.path.string());
  EXPECT_NE(dataset_digest(a.file("manifest.json")), dataset_digest(c.file("manifest.json")));
}

TEST(Synthetic, LoadedDatasetMatchesMemoryBitwise) {
  const SyntheticSpec spec = small_spec();
  TempDir dir("mvgmn_unit_syn_load");
  SyntheticDataset ds = generate_synthetic(spec);
  const Manifest m = write_dataset(ds, dir.path.string());
  const Dataset loaded = load_dataset(dir.file("manifest.json"));
  EXPECT_EQ(loaded.manifest.spec, spec);
  ASSERT_EQ(loaded.samples.size(), spec.sample_count());
  for (std::size_t i = 0; i < ds.data.size(); ++i)
    for (std::size_t v = 0; v < spec.views; ++v) {
      EXPECT_EQ(loaded.samples[i].rgb[v], ds.data[i].rgb[v]);
      EXPECT_EQ(loaded.samples[i].sk[v], ds.data[i].sk[v]);
    }
  EXPECT_EQ(Manifest::from_json(m.to_json()).to_json(), m.to_json());
  EXPECT_EQ(SyntheticSpec::from_json(spec.to_json()), spec);
}

TEST(Synthetic, ShapesLabelsAndSubjects) {
  const SyntheticSpec spec = small_spec();
  const SyntheticDataset ds = generate_synthetic(spec);
  ASSERT_EQ(ds.records.size(), 24u);
  std::set<std::size_t> subjects;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    EXPECT_EQ(ds.records[i].id, i);
    EXPECT_EQ(ds.records[i].label, i / 8);
    EXPECT_LT(ds.records[i].subject, 4u);
    subjects.insert(ds.records[i].subject);
    EXPECT_EQ(ds.data[i].rgb[0].shape(), (Shape{4, 3, 6}));
    EXPECT_EQ(ds.data[i].sk[1].shape(), (Shape{8, 5}));
  }
  EXPECT_EQ(subjects.size(), 4u);
  SyntheticSpec bad = spec;
  bad.noise = -1.0;
  EXPECT_THROW(generate_synthetic(bad), ConfigError);
}

/// Patch-averaged RGB feature of view v at frame t.
std::vector<double> patch_mean(const Tensor& rgb, std::size_t t) {
  const std::size_t p = rgb.dim(1), d = rgb.dim(2);
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += rgb[(t * p + i) * d + j] / static_cast<double>(p);
  return out;
}

TEST(Synthetic, ViewsUnmixToTheSharedLatent) {
  SyntheticSpec spec = small_spec();
  spec.noise = 0.0;
  spec.views = 3;
  const SyntheticDataset ds = generate_synthetic(spec);
  for (std::size_t v = 0; v < spec.views; ++v) {
    const Tensor& q = ds.view_maps[v];
    for (std::size_t i = 0; i < spec.rgb_dim; ++i)
      for (std::size_t j = 0; j < spec.rgb_dim; ++j) {
        double dot = 0.0;
        for (std::size_t r = 0; r < spec.rgb_dim; ++r) dot += q(r, i) * q(r, j);
        EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
      }
  }
  for (std::size_t s : {0u, 9u, 17u}) {
    const auto& rec = ds.records[s];
    for (std::size_t t = 0; t < spec.steps; ++t) {
      std::vector<std::vector<double>> unmixed;
      for (std::size_t v = 0; v < spec.views; ++v) {
        const auto x = patch_mean(ds.data[s].rgb[v], t);
        std::vector<double> z(spec.rgb_dim, 0.0);
        for (std::size_t i = 0; i < spec.rgb_dim; ++i)
          for (std::size_t r = 0; r < spec.rgb_dim; ++r) z[i] += ds.view_maps[v](r, i) * x[r];
        unmixed.push_back(z);
      }
      const Tensor latent = synthetic_latent(spec, rec.label, rec.subject, static_cast<double>(t) / spec.steps);
      for (std::size_t i = 0; i < spec.rgb_dim; ++i) {
        EXPECT_NEAR(unmixed[1][i], unmixed[0][i], 1e-6);
        EXPECT_NEAR(unmixed[0][i], latent[i], 1e-6);
      }
    }
  }
}

std::vector<double> flat_features(const SampleData& s) {
  std::vector<double> f;
  for (const Tensor& rgb : s.rgb)
    for (std::size_t t = 0; t < rgb.dim(0); ++t) {
      const auto m = patch_mean(rgb, t);
      f.insert(f.end(), m.begin(), m.end());
    }
  return f;
}

TEST(Synthetic, NearestCentroidSeparatesNoiselessClasses) {
  SyntheticSpec spec = small_spec();
  spec.noise = 0.0;
  spec.classes = 2;
  spec.subjects = 5;
  spec.samples_per_class = 20;
  const SyntheticDataset ds = generate_synthetic(spec);
  Manifest m;
  m.spec = spec;
  m.samples = ds.records;
  const Split split = make_splits(m, Protocol::CrossSubject);
  std::vector<std::vector<double>> centroid(2);
  std::vector<double> count(2, 0.0);
  for (std::size_t i : split.train) {
    const auto f = flat_features(ds.data[i]);
    auto& c = centroid[ds.records[i].label];
    if (c.empty()) c.assign(f.size(), 0.0);
    for (std::size_t j = 0; j < f.size(); ++j) c[j] += f[j];
    count[ds.records[i].label] += 1.0;
  }
  for (std::size_t k = 0; k < 2; ++k)
    for (double& v : centroid[k]) v /= count[k];
  ASSERT_FALSE(split.test.empty());
  for (std::size_t i : split.test) {
    const auto f = flat_features(ds.data[i]);
    double best = INFINITY;
    std::size_t pick = 0;
    for (std::size_t k = 0; k < 2; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < f.size(); ++j) d += (f[j] - centroid[k][j]) * (f[j] - centroid[k][j]);
      if (d < best) best = d, pick = k;
    }
    EXPECT_EQ(pick, ds.records[i].label) << "sample " << i;
  }
}

TEST(Synthetic, LinearProbeOnPooledFeaturesFitsNoiselessTask) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 25;
  spec.noise = 0.0;
  spec.seed = 3;
  const SyntheticDataset ds = generate_synthetic(spec);
  // Pooled feature: time and patch mean of RGB plus time mean of skeleton, per view.
  std::vector<std::vector<double>> x;
  for (const auto& s : ds.data) {
    std::vector<double> f;
    for (std::size_t v = 0; v < spec.views; ++v) {
      std::vector<double> rgb(spec.rgb_dim, 0.0), sk(spec.skeleton_dim, 0.0);
      for (std::size_t t = 0; t < spec.steps; ++t) {
        const auto m = patch_mean(s.rgb[v], t);
        for (std::size_t j = 0; j < spec.rgb_dim; ++j) rgb[j] += m[j] / spec.steps;
      }
      for (std::size_t t = 0; t < spec.skeleton_steps(); ++t)
        for (std::size_t j = 0; j < spec.skeleton_dim; ++j) sk[j] += s.sk[v](t, j) / spec.skeleton_steps();
      f.insert(f.end(), rgb.begin(), rgb.end());
      f.insert(f.end(), sk.begin(), sk.end());
    }
    f.push_back(1.0);
    x.push_back(f);
  }
  const std::size_t dim = x.front().size(), k = spec.classes;
  std::vector<double> w(dim * k, 0.0);
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> grad(dim * k, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::vector<double> z(k, 0.0);
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < dim; ++j) z[c] += w[c * dim + j] * x[i][j];
      const double mx = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double& v : z) sum += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < k; ++c) {
        const double g = z[c] / sum - (c == ds.records[i].label ? 1.0 : 0.0);
        for (std::size_t j = 0; j < dim; ++j) grad[c * dim + j] += g * x[i][j];
      }
    }
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= 0.5 * grad[j] / static_cast<double>(x.size());
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t best = 0;
    double best_z = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) {
      double z = 0.0;
      for (std::size_t j = 0; j < dim; ++j) z += w[c * dim + j] * x[i][j];
      if (z > best_z) best_z = z, best = c;
    }
    correct += best == ds.records[i].label;
  }
  EXPECT_GE(static_cast<double>(correct) / x.size(), 0.99);
}

TEST(Splits, CrossSubjectHoldsOutWholeSubjects) {
  SyntheticSpec spec = small_spec();
  const SyntheticDataset ds = generate_synthetic(spec);
  Manifest m;
  m.spec = spec;
  m.samples = ds.records;
  SplitOptions opt;
  opt.holdout_subjects = {3};
  const Split s = make_splits(m, Protocol::CrossSubject, opt);
  std::set<std::size_t> train_subjects, all;
  for (std::size_t i : s.train) train_subjects.insert(m.samples[i].subject), all.insert(i);
  for (std::size_t i : s.test) {
    EXPECT_EQ(m.samples[i].subject, 3u);
    EXPECT_FALSE(train_subjects.count(m.samples[i].subject));
    EXPECT_TRUE(all.insert(i).second);
  }
  EXPECT_EQ(all.size(), m.samples.size());
  EXPECT_EQ(s.test_subjects, (std::vector<std::size_t>{3}));
  EXPECT_FALSE(s.masked_view.has_value());

  const Split d = make_splits(m, Protocol::CrossSubject);
  EXPECT_EQ(d.test_subjects, (std::vector<std::size_t>{3}));

  opt.holdout_subjects = {0, 1, 2, 3};
  EXPECT_THROW(make_splits(m, Protocol::CrossSubject, opt), ConfigError);
  m.spec.subjects = 1;
  EXPECT_THROW(make_splits(m, Protocol::CrossSubject), ConfigError);
}

TEST(Splits, CrossViewIsDisjointAndMasksOneView) {
  SyntheticSpec spec = small_spec();
  const SyntheticDataset ds = generate_synthetic(spec);
  Manifest m;
  m.spec = spec;
  m.samples = ds.records;
  const Split s = make_splits(m, Protocol::CrossView);
  ASSERT_TRUE(s.masked_view.has_value());
  EXPECT_EQ(*s.masked_view, 1u);
  std::set<std::size_t> seen;
  for (std::size_t i : s.train) EXPECT_TRUE(seen.insert(i).second);
  for (std::size_t i : s.test) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen.size(), m.samples.size());
  EXPECT_FALSE(s.test.empty());

  Rng rng(1);
  const ModelInput in = make_model_input(ds.data[s.test[0]], spec.steps, rng, s.masked_view);
  ASSERT_EQ(in.frames.size(), spec.views * spec.steps);
  for (std::size_t t = 0; t < spec.steps; ++t) {
    const FrameTokens& f = in.frames[1 * spec.steps + t];
    for (double v : f.rgb_patches.data()) EXPECT_EQ(v, 0.0);
    for (double v : f.skeleton_token.data()) EXPECT_EQ(v, 0.0);
    double other = 0.0;
    for (double v : in.frames[t].rgb_patches.data()) other += std::abs(v);
    EXPECT_GT(other, 0.0);
  }
  m.spec.views = 1;
  EXPECT_THROW(make_splits(m, Protocol::CrossView), ConfigError);
  EXPECT_THROW(parse_protocol("cross_room"), ConfigError);
}

TEST(ModelInput, FramesComeFromTheRightViewAndSegment) {
  const SyntheticSpec spec = small_spec();
  const SyntheticDataset ds = generate_synthetic(spec);
  Rng a(9), b(9);
  const ModelInput x = make_model_input(ds.data[3], spec.steps, a);
  EXPECT_EQ(x.views, spec.views);
  EXPECT_EQ(x.steps, spec.steps);
  // With as many segments as frames every frame is taken in order.
  for (std::size_t v = 0; v < spec.views; ++v)
    for (std::size_t t = 0; t < spec.steps; ++t) {
      const Tensor& rgb = ds.data[3].rgb[v];
      const FrameTokens& f = x.frames[v * spec.steps + t];
      for (std::size_t i = 0; i < f.rgb_patches.size(); ++i)
        EXPECT_EQ(f.rgb_patches[i], rgb[t * spec.patches * spec.rgb_dim + i]);
    }
  const ModelInput y = make_model_input(ds.data[3], spec.steps, b);
  for (std::size_t i = 0; i < x.frames.size(); ++i) EXPECT_EQ(x.frames[i].skeleton_token, y.frames[i].skeleton_token);
}

}  // namespace
}  // namespace mvgmn

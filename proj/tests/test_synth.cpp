#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <iterator>

#include "dvs/dataset_io.hpp"
#include "json.hpp"
#include "dvs/spectral.hpp"
#include "dvs/synth.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace dvs;
using namespace dvs::synth;

namespace {

SiteProfile quiet_profile() {
  SiteProfile p = site_a_profile();
  p.noise_level = 0.0;
  p.drift = 0.0;
  return p;
}

// One-sided energy per bin k = 0..T/2, summed over columns, via the naive DFT.
std::vector<double> one_sided_energy(const Tensor& values) {
  const std::size_t T = values.dim(0), S = values.dim(1);
  std::vector<double> e(T / 2 + 1, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<std::complex<double>> col(T);
    for (std::size_t t = 0; t < T; ++t) col[t] = values[t * S + s];
    const auto X = oracle::dft(col);
    for (std::size_t k = 0; k <= T / 2; ++k) e[k] += std::norm(X[k]) * ((k == 0 || k == T / 2) ? 1.0 : 2.0);
  }
  return e;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same(const Dataset& a, const Dataset& b) {
  if (a.samples.size() != b.samples.size() || a.time != b.time || a.space != b.space || a.classes != b.classes)
    return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const Sample &x = a.samples[i], &y = b.samples[i];
    if (x.label != y.label || x.site != y.site || !(x.values == y.values)) return false;
  }
  return true;
}

}  // namespace

TEST(GenSample, Deterministic) {
  for (int c = 0; c < kClasses; ++c) {
    for (const SiteProfile& p : {site_a_profile(), site_b_profile()}) {
      const Sample a = gen_sample(static_cast<EventClass>(c), p, 1234);
      const Sample b = gen_sample(static_cast<EventClass>(c), p, 1234);
      EXPECT_EQ(a.values, b.values);
      EXPECT_EQ(a.label, c);
      EXPECT_EQ(a.site, p.tag);
      EXPECT_EQ(a.values.shape(), (Shape{kTime, kSpace}));
      for (float v : a.values.storage()) ASSERT_TRUE(std::isfinite(v));
      EXPECT_FALSE(gen_sample(static_cast<EventClass>(c), p, 1235).values == a.values);
    }
  }
}

TEST(GenSample, SingleHammerImpulseSitsAboveBin20) {
  SiteProfile p = quiet_profile();
  p.hammer_extra_impulses = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto e = one_sided_energy(gen_sample(EventClass::hammer, p, seed).values);
    double total = 0.0, high = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) {
      total += e[k];
      if (k >= 20) high += e[k];
    }
    ASSERT_GT(total, 0.0);
    EXPECT_GT(high / total, 0.5) << "seed " << seed;
  }
}

TEST(GenSample, ExcavatorEnergyBelowBin16) {
  const SiteProfile p = quiet_profile();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto e = one_sided_energy(gen_sample(EventClass::excavator, p, seed).values);
    double total = 0.0, low = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) {
      total += e[k];
      if (k < 16) low += e[k];
    }
    ASSERT_GT(total, 0.0);
    EXPECT_GE(low / total, 0.9) << "seed " << seed;
  }
}

TEST(GenSample, InvalidProfileRejected) {
  SiteProfile p = site_a_profile();
  p.width = {3.0, 1.0};
  EXPECT_FALSE(p.valid());
  EXPECT_THROW(gen_sample(EventClass::hammer, p, 1), ValueError);
  p = site_a_profile();
  p.noise_level = -0.1;
  EXPECT_FALSE(p.valid());
}

TEST(SiteProfiles, SiteBIsShifted) {
  const SiteProfile a = site_a_profile(), b = site_b_profile();
  EXPECT_TRUE(a.valid());
  EXPECT_TRUE(b.valid());
  EXPECT_NE(a.tag, b.tag);
  // 6 dB lower SNR means twice the noise amplitude.
  EXPECT_NEAR(b.noise_level / a.noise_level, 2.0, 1e-12);
  EXPECT_NE(b.freq_scale, 1.0);
  EXPECT_GT(b.drift, 0.0);
}

TEST(Standardize, ConstantMapsToZero) {
  Tensor c(Shape{kTime, kSpace});
  c.fill(3.25f);
  for (float v : standardize(c).storage()) EXPECT_EQ(v, 0.0f);
  for (float v : standardize(Tensor(Shape{kTime, kSpace})).storage()) EXPECT_EQ(v, 0.0f);
}

TEST(Standardize, ZeroMeanUnitStdAndIdempotent) {
  for (int c = 0; c < kClasses; ++c) {
    const Tensor raw = gen_sample(static_cast<EventClass>(c), site_b_profile(), 99).values;
    const Tensor z = standardize(raw);
    double mean = 0.0, var = 0.0;
    for (float v : z.storage()) mean += v;
    mean /= double(z.size());
    for (float v : z.storage()) var += (v - mean) * (v - mean);
    var /= double(z.size());
    EXPECT_LE(std::fabs(mean), 1e-5);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-4);
    EXPECT_LE(oracle::max_abs_diff(standardize(z), z), 1e-5);
  }
}

TEST(GenSite, CountsAndOrder) {
  const Dataset d = gen_site({3, 0, 2}, site_a_profile(), 5);
  ASSERT_EQ(d.samples.size(), 5u);
  EXPECT_EQ(d.class_counts(), (std::array<std::size_t, 3>{3, 0, 2}));
  EXPECT_THROW(gen_site({1, -1, 0}, site_a_profile(), 5), ValueError);
}

TEST(GenDataset, DefaultCountsMatchCorpusTable) {
  const DatasetSpec spec;
  int a = 0, b = 0;
  for (int c = 0; c < kClasses; ++c) {
    a += spec.counts_a[c];
    b += spec.counts_b[c];
  }
  EXPECT_EQ(a, 10249);
  EXPECT_EQ(b, 875);
  EXPECT_EQ(spec.counts_a, (std::array<int, 3>{3332, 3558, 3359}));
  EXPECT_EQ(spec.counts_b, (std::array<int, 3>{268, 330, 277}));
}

TEST(GenDataset, FilesManifestAndRegeneration) {
  TempDir t1("synth1"), t2("synth2");
  DatasetSpec spec;
  spec.counts_a = {4, 5, 6};
  spec.counts_b = {1, 2, 3};
  const GeneratedFiles f1 = gen_dataset(spec, t1.path().string());
  const GeneratedFiles f2 = gen_dataset(spec, t2.path().string());
  EXPECT_EQ(f1.site_a_count, 15u);
  EXPECT_EQ(f1.site_b_count, 6u);
  EXPECT_EQ(slurp(f1.site_a_path), slurp(f2.site_a_path));
  EXPECT_EQ(slurp(f1.site_b_path), slurp(f2.site_b_path));
  EXPECT_EQ(slurp(f1.manifest_path), slurp(f2.manifest_path));

  const Dataset a = io::load_dataset(f1.site_a_path);
  EXPECT_TRUE(same(a, gen_site(spec.counts_a, spec.site_a, spec.seed)));
  const Dataset b = io::load_dataset(f1.site_b_path);
  for (const Sample& s : b.samples) EXPECT_EQ(s.site, spec.site_b.tag);

  std::ifstream in(f1.manifest_path);
  const nlohmann::json m = nlohmann::json::parse(in);
  EXPECT_EQ(m["seed"].get<std::uint64_t>(), spec.seed);
  EXPECT_EQ(m["classes"].size(), 3u);
  EXPECT_EQ(m["classes"][0].get<std::string>(), "hammer");
  EXPECT_EQ(m["sites"]["A"]["total"].get<int>(), 15);
  EXPECT_EQ(m["sites"]["B"]["counts"][2].get<int>(), 3);
  EXPECT_TRUE(m["sites"]["B"]["profile"].contains("noise_level"));

  spec.seed = 8;
  const GeneratedFiles f3 = gen_dataset(spec, t2.path().string());
  EXPECT_NE(slurp(f1.site_a_path), slurp(f3.site_a_path));
}

TEST(GenDataset, ZeroCountsGiveValidEmptyFiles) {
  TempDir t("synth0");
  DatasetSpec spec;
  spec.counts_a = {0, 0, 0};
  spec.counts_b = {0, 0, 0};
  const GeneratedFiles f = gen_dataset(spec, t.path().string());
  const auto bytes = slurp(f.site_a_path);
  EXPECT_EQ(bytes.size(), 4u + 2 + 4 + 2 + 2 + 1);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DVS1");
  const Dataset d = io::load_dataset(f.site_a_path);
  EXPECT_TRUE(d.samples.empty());
  EXPECT_EQ(d.time, kTime);
  EXPECT_EQ(d.space, kSpace);
  EXPECT_EQ(d.classes, kClasses);
}

TEST(GenDataset, UnwritableDirectoryIsIoError) {
  TempDir t("synthio");
  std::ofstream(t.file("blocker")) << "x";
  try {
    gen_dataset(DatasetSpec{}, t.file("blocker") + "/sub");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("blocker"), std::string::npos);
  }
}

TEST(DatasetIo, RoundTripBitwise) {
  const Dataset d = gen_site({2, 2, 2}, site_b_profile(), 11);
  const auto bytes = io::encode_dataset(d);
  EXPECT_EQ(bytes.size(), 15u + 6 * (2 + 4 * kTime * kSpace));
  EXPECT_TRUE(same(io::decode_dataset(bytes), d));
  EXPECT_EQ(io::encode_dataset(io::decode_dataset(bytes)), bytes);
  TempDir t("dsio");
  io::save_dataset(d, t.file("d.dvs1"));
  EXPECT_TRUE(same(io::load_dataset(t.file("d.dvs1")), d));
}

TEST(DatasetIo, TruncatedFileNamesLengths) {
  const Dataset d = gen_site({1, 1, 0}, site_a_profile(), 3);
  auto bytes = io::encode_dataset(d);
  const std::size_t want = bytes.size();
  bytes.resize(want - 10);
  try {
    io::decode_dataset(bytes, "cut.dvs1");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(want)), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(want - 10)), std::string::npos) << msg;
    EXPECT_NE(msg.find("cut.dvs1"), std::string::npos) << msg;
  }
  bytes.resize(7);
  EXPECT_THROW(io::decode_dataset(bytes), FormatError);
}

TEST(DatasetIo, BadMagicVersionAndLabel) {
  const Dataset d = gen_site({1, 0, 0}, site_a_profile(), 3);
  auto bytes = io::encode_dataset(d);
  auto bad = bytes;
  std::copy_n("XXXX", 4, bad.begin());
  try {
    io::decode_dataset(bad);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos) << e.what();
  }
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(io::decode_dataset(bad), FormatError);
  bad = bytes;
  bad[15] = 7;  // first sample label
  EXPECT_THROW(io::decode_dataset(bad), FormatError);
  EXPECT_THROW(io::load_dataset("/nonexistent/dir/x.dvs1"), IoError);
}

TEST(Background, RmsMatchesNoiseLevelPerWindow) {
  SiteProfile p = site_a_profile();
  for (double pink : {0.0, 0.5, 1.0}) {
    p.pink_fraction = pink;
    double energy = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      Rng rng(seed);
      Tensor field(Shape{kTime, kSpace});
      add_background(p, rng, field);
      for (float v : field.storage()) energy += double(v) * v;
      n += field.size();
    }
    EXPECT_NEAR(std::sqrt(energy / double(n)) / p.noise_level, 1.0, 0.05) << "pink fraction " << pink;
  }
}

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "ditcod/data.hpp"
#include "ditcod/errors.hpp"
#include "ditcod/image_io.hpp"
#include "test_support.hpp"

using namespace ditcod;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ditcod_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(ImageIo, P6HeaderParses) {
  auto b = bytes_of("P6\n4 4\n255\n");
  for (int i = 0; i < 48; ++i) b.push_back(static_cast<std::uint8_t>(i * 5));
  const Tensor t = parse_pnm(b);
  EXPECT_EQ(t.shape(), (Shape{3, 4, 4}));
  EXPECT_DOUBLE_EQ(t[0], 0.0);               // pixel (0,0) red
  EXPECT_DOUBLE_EQ(t[16], 5.0 / 255.0);      // pixel (0,0) green
  EXPECT_DOUBLE_EQ(t[1], 15.0 / 255.0);      // pixel (0,1) red
}

TEST(ImageIo, CommentsInHeader) {
  auto b = bytes_of("P5 # comment\n2 # w\n1\n255\n");
  b.push_back(0);
  b.push_back(255);
  const Tensor t = parse_pnm(b);
  EXPECT_EQ(t.shape(), (Shape{1, 1, 2}));
  EXPECT_EQ(t[1], 1.0);
}

TEST(ImageIo, TruncatedPayloadReportsCounts) {
  auto b = bytes_of("P6\n4 4\n255\n");
  b.resize(b.size() + 40, 7);
  try {
    parse_pnm(b);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 48"), std::string::npos) << msg;
    EXPECT_NE(msg.find("got 40"), std::string::npos) << msg;
    EXPECT_EQ(e.offset(), b.size());
  }
}

TEST(ImageIo, MalformedHeaders) {
  EXPECT_THROW(parse_pnm(bytes_of("P3\n1 1\n255\n")), ParseError);
  try {
    parse_pnm(bytes_of("P5\n2 x\n255\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 5u);
  }
  try {
    parse_pnm(bytes_of("P5\n2 2\n65535\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 7u);
  }
}

TEST(ImageIo, RoundTripIsExactAt8Bits) {
  std::mt19937_64 rng(1);
  for (std::size_t c : {1u, 3u}) {
    Tensor t({c, 5, 7});
    for (double& v : t.mutable_data()) v = static_cast<double>(rng() % 256) / 255.0;
    const fs::path p = scratch("rt") += (c == 1 ? ".pgm" : ".ppm");
    save_pnm(p, t);
    const Tensor u = load_pnm(p);
    ASSERT_EQ(u.shape(), t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(u[i], t[i]);
    fs::remove(p);
  }
  EXPECT_THROW(save_pnm(scratch("bad.pgm"), Tensor({2, 2, 2})), ShapeError);
  EXPECT_THROW(quantize(std::nan("")), NumericalError);
  EXPECT_EQ(quantize(-1.0), 0);
  EXPECT_EQ(quantize(0.5), 128);
}

TEST(Synth, RejectsZeroContrast) {
  SynthConfig c;
  c.delta = 0.0;
  EXPECT_THROW(c.validate(), ValueError);
  c.delta = 0.25;
  EXPECT_THROW(c.validate(), ValueError);
  c.delta = 0.2;
  EXPECT_NO_THROW(c.validate());
}

TEST(Synth, ForegroundAreaWithinContractOver100Samples) {
  SynthConfig c;
  c.seed = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const Sample s = synth_sample(c, i);
    double a = 0.0;
    for (double v : s.gt.data()) a += v;
    a /= static_cast<double>(s.gt.numel());
    EXPECT_GE(a, 0.02) << i;
    EXPECT_LE(a, 0.6) << i;
  }
}

TEST(Synth, SampleContents) {
  SynthConfig c;
  c.shapes = ShapeFamily::Blob;
  const Sample s = synth_sample(c, 3);
  EXPECT_EQ(s.image.shape(), (Shape{3, 64, 64}));
  EXPECT_EQ(s.gt.shape(), (Shape{1, 64, 64}));
  for (double v : s.image.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  // Boundary equals canny(gt); the object differs from the background by about delta.
  const Tensor e = canny(s.gt);
  for (std::size_t i = 0; i < e.numel(); ++i) ASSERT_EQ(e[i], s.boundary[i]);
  double in = 0, out = 0, nin = 0, nout = 0;
  for (std::size_t i = 0; i < s.gt.numel(); ++i) {
    (s.gt[i] == 1.0 ? in : out) += s.image[i];
    (s.gt[i] == 1.0 ? nin : nout) += 1;
  }
  EXPECT_GT(std::abs(in / nin - out / nout), 0.03);
  EXPECT_LT(std::abs(in / nin - out / nout), 0.25);
}

TEST(Synth, SeedsGiveDistinctSamples) {
  SynthConfig a, b;
  b.seed = 1;
  const Sample x = synth_sample(a, 0), y = synth_sample(b, 0), z = synth_sample(a, 1);
  EXPECT_NE(std::vector<double>(x.image.data().begin(), x.image.data().end()),
            std::vector<double>(y.image.data().begin(), y.image.data().end()));
  EXPECT_NE(std::vector<double>(x.gt.data().begin(), x.gt.data().end()),
            std::vector<double>(z.gt.data().begin(), z.gt.data().end()));
}

TEST(Dataset, GenerationIsByteIdenticalAcrossRunsAndThreadCounts) {
  SynthConfig c;
  c.n_samples = 6;
  c.image_size = 32;
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  setenv("DITCOD_THREADS", "1", 1);
  gen_dataset(c, a);
  setenv("DITCOD_THREADS", "3", 1);
  gen_dataset(c, b);
  unsetenv("DITCOD_THREADS");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path other = b / fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(read_bytes(e.path()), read_bytes(other)) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 6u * 3u + 1u);

  const auto ids = list_ids(a);
  ASSERT_EQ(ids.size(), 6u);
  EXPECT_EQ(ids.front(), "00000");
  const Sample s = load_sample(a, ids[2]);
  const Sample ref = synth_sample(c, 2);
  for (std::size_t i = 0; i < s.gt.numel(); ++i) ASSERT_EQ(s.gt[i], ref.gt[i]);
  for (std::size_t i = 0; i < s.image.numel(); ++i) ASSERT_NEAR(s.image[i], ref.image[i], 0.5 / 255 + 1e-12);

  // Boundary maps are recomputed when absent.
  fs::remove(a / "bnd" / (ids[2] + ".pgm"));
  const Sample t = load_sample(a, ids[2]);
  for (std::size_t i = 0; i < t.boundary.numel(); ++i) ASSERT_EQ(t.boundary[i], s.boundary[i]);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, ErrorsOnMissingOrMismatchedFiles) {
  EXPECT_THROW(list_ids(scratch("missing")), IoError);
  const fs::path d = scratch("mismatch");
  fs::create_directories(d / "img");
  fs::create_directories(d / "gt");
  save_pnm(d / "img" / "x.ppm", Tensor({3, 4, 4}, 0.5));
  save_pnm(d / "gt" / "x.pgm", Tensor({1, 4, 5}, 0.0));
  EXPECT_THROW(load_sample(d, "x"), ShapeError);
  fs::remove_all(d);
}

TEST(Dataset, ParallelForPropagatesLowestIndexError) {
  setenv("DITCOD_THREADS", "4", 1);
  std::vector<int> hit(20, 0);
  parallel_for(20, [&](std::size_t i) { hit[i] = 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  try {
    parallel_for(20, [](std::size_t i) {
      if (i == 5 || i == 11) throw ValueError("fail " + std::to_string(i));
    });
    FAIL();
  } catch (const ValueError& e) {
    EXPECT_STREQ(e.what(), "fail 5");
  }
  setenv("DITCOD_THREADS", "zero", 1);
  EXPECT_THROW(worker_count(), ValueError);
  unsetenv("DITCOD_THREADS");
}

TEST(Dataset, ConfigJsonRoundTrip) {
  SynthConfig c;
  c.n_samples = 9;
  c.delta = 0.07;
  c.shapes = ShapeFamily::Ellipse;
  const SynthConfig d = synth_config_from_json(to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
  EXPECT_THROW(synth_config_from_json({{"detla", 0.1}}), ValueError);
}

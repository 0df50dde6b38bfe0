#include <gtest/gtest.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "del/data.hpp"

namespace fs = std::filesystem;

using del::batches;
using del::Dataset;
using del::IdxFile;
using del::IoError;
using del::load_cifar10;
using del::load_mnist;
using del::ParamError;
using del::parse_idx;
using del::read_maybe_gzip;
using del::serialize_idx;
using del::Split;

namespace {

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> make_idx(const std::vector<std::uint32_t>& dims,
                                   const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> bytes{0, 0, 0x08, static_cast<std::uint8_t>(dims.size())};
  for (const std::uint32_t d : dims) push_be32(bytes, d);
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  return bytes;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  ASSERT_TRUE(out.good());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> gzip_bytes(const std::vector<std::uint8_t>& raw) {
  z_stream zs{};
  EXPECT_EQ(deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY), Z_OK);
  std::vector<std::uint8_t> out(compressBound(static_cast<uLong>(raw.size())) + 64);
  zs.next_in = const_cast<Bytef*>(raw.data());
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  EXPECT_EQ(deflate(&zs, Z_FINISH), Z_STREAM_END);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("del-data-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  static int counter_;
  fs::path path_;
};

int TempDir::counter_ = 0;

/// Three 4x4 images with bytes 0..15, 100..115, 240..255 and labels 1, 7, 9.
void write_mnist_fixture(const fs::path& dir, bool gzip_images, int label_count = 3) {
  std::vector<std::uint8_t> pixels;
  for (const int base : {0, 100, 240})
    for (int i = 0; i < 16; ++i) pixels.push_back(static_cast<std::uint8_t>(base + i));
  const std::vector<std::uint8_t> image_idx = make_idx({3, 4, 4}, pixels);
  std::vector<std::uint8_t> labels{1, 7, 9};
  labels.resize(static_cast<std::size_t>(label_count),
                static_cast<std::uint8_t>(label_count > 3 ? 0 : 9));
  const std::vector<std::uint8_t> label_idx =
      make_idx({static_cast<std::uint32_t>(label_count)}, labels);

  for (const char* stem : {"train-images-idx3-ubyte", "t10k-images-idx3-ubyte"}) {
    if (gzip_images)
      write_bytes(dir / (std::string(stem) + ".gz"), gzip_bytes(image_idx));
    else
      write_bytes(dir / stem, image_idx);
  }
  write_bytes(dir / "train-labels-idx1-ubyte", label_idx);
  write_bytes(dir / "t10k-labels-idx1-ubyte", make_idx({3}, {1, 7, 9}));
}

/// One CIFAR-style file holding `records` items; label r, pixel bytes are
/// plane-coded so channel recovery is checkable.
std::vector<std::uint8_t> cifar_file(int records) {
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < records; ++r) {
    bytes.push_back(static_cast<std::uint8_t>(r % 10));
    for (int plane = 0; plane < 3; ++plane)
      for (int i = 0; i < 1024; ++i)
        bytes.push_back(static_cast<std::uint8_t>((plane * 80 + i + r) % 256));
  }
  return bytes;
}

void write_cifar_fixture(const fs::path& dir) {
  for (int b = 1; b <= 5; ++b)
    write_bytes(dir / ("data_batch_" + std::to_string(b) + ".bin"), cifar_file(2));
  write_bytes(dir / "test_batch.bin", cifar_file(2));
}

}  // namespace

TEST(IdxFormat, ParseReadsDimsAndPayload) {
  const std::vector<std::uint8_t> bytes = make_idx({2, 3}, {10, 20, 30, 40, 50, 60});
  const IdxFile idx = parse_idx(bytes);
  EXPECT_EQ(idx.dtype, 0x08);
  ASSERT_EQ(idx.dims.size(), 2u);
  EXPECT_EQ(idx.dims[0], 2);
  EXPECT_EQ(idx.dims[1], 3);
  ASSERT_EQ(idx.payload.size(), 6u);
  EXPECT_EQ(idx.payload[4], 50);
}

TEST(IdxFormat, RoundTripIsByteIdentical) {
  std::vector<std::uint8_t> payload(24);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<std::uint8_t>(7 * i);
  const std::vector<std::uint8_t> bytes = make_idx({2, 3, 4}, payload);
  EXPECT_EQ(serialize_idx(parse_idx(bytes)), bytes);
}

TEST(IdxFormat, RejectsMalformedHeaders) {
  EXPECT_THROW(parse_idx({0, 0, 8}), IoError);
  std::vector<std::uint8_t> bad_magic = make_idx({2}, {1, 2});
  bad_magic[0] = 1;
  EXPECT_THROW(parse_idx(bad_magic), IoError);
  std::vector<std::uint8_t> float_type = make_idx({2}, {1, 2});
  float_type[2] = 0x0D;
  EXPECT_THROW(parse_idx(float_type), IoError);
  std::vector<std::uint8_t> short_payload = make_idx({4}, {1, 2});
  EXPECT_THROW(parse_idx(short_payload), IoError);
  std::vector<std::uint8_t> long_payload = make_idx({1}, {1, 2});
  EXPECT_THROW(parse_idx(long_payload), IoError);
  std::vector<std::uint8_t> truncated_dims{0, 0, 8, 2, 0, 0};
  EXPECT_THROW(parse_idx(truncated_dims), IoError);
}

TEST(ReadMaybeGzip, PassesRawBytesThroughAndInflatesGzip) {
  TempDir tmp;
  const std::vector<std::uint8_t> raw{5, 6, 7, 8, 9};
  write_bytes(tmp.path() / "plain.bin", raw);
  EXPECT_EQ(read_maybe_gzip(tmp.path() / "plain.bin"), raw);
  write_bytes(tmp.path() / "packed.bin", gzip_bytes(raw));
  EXPECT_EQ(read_maybe_gzip(tmp.path() / "packed.bin"), raw);
  EXPECT_THROW(read_maybe_gzip(tmp.path() / "absent.bin"), IoError);
}

TEST(LoadMnist, ParsesAndNormalizesFixture) {
  TempDir tmp;
  write_mnist_fixture(tmp.path(), false);
  const auto [train, test] = load_mnist(tmp.path());
  EXPECT_EQ(train.split, Split::kTrain);
  EXPECT_EQ(test.split, Split::kTest);
  ASSERT_EQ(train.images.shape(), (std::vector<std::int64_t>{3, 1, 4, 4}));
  EXPECT_EQ(train.count(), 3);
  ASSERT_EQ(train.labels.size(), 3u);
  EXPECT_EQ(train.labels[0], 1);
  EXPECT_EQ(train.labels[2], 9);
  EXPECT_DOUBLE_EQ(train.images.at(0, 0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(train.images.at(0, 0, 0, 1), 1.0 / 255.0);
  EXPECT_DOUBLE_EQ(train.images.at(2, 0, 3, 3), 1.0);
  for (std::int64_t i = 0; i < train.images.size(); ++i) {
    EXPECT_GE(train.images[i], 0.0);
    EXPECT_LE(train.images[i], 1.0);
  }
}

TEST(LoadMnist, AcceptsGzippedFilesAndSubdirectory) {
  TempDir tmp;
  fs::create_directories(tmp.path() / "mnist");
  write_mnist_fixture(tmp.path() / "mnist", true);
  const auto [train, test] = load_mnist(tmp.path());
  EXPECT_EQ(train.count(), 3);
  EXPECT_EQ(test.count(), 3);
  EXPECT_DOUBLE_EQ(test.images.at(1, 0, 0, 0), 100.0 / 255.0);
}

TEST(LoadMnist, RejectsCountMismatch) {
  TempDir tmp;
  write_mnist_fixture(tmp.path(), false, 2);
  EXPECT_THROW(load_mnist(tmp.path()), IoError);
}

TEST(LoadMnist, MissingFileErrorNamesTheSearchPath) {
  TempDir tmp;
  try {
    load_mnist(tmp.path());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("train-images-idx3-ubyte"), std::string::npos);
    EXPECT_NE(what.find(tmp.path().string()), std::string::npos);
  }
}

TEST(LoadCifar10, ParsesPlanesAndLabels) {
  TempDir tmp;
  write_cifar_fixture(tmp.path());
  const auto [train, test] = load_cifar10(tmp.path());
  ASSERT_EQ(train.images.shape(), (std::vector<std::int64_t>{10, 3, 32, 32}));
  ASSERT_EQ(test.images.shape(), (std::vector<std::int64_t>{2, 3, 32, 32}));
  EXPECT_EQ(train.labels[0], 0);
  EXPECT_EQ(train.labels[1], 1);
  EXPECT_EQ(train.labels[2], 0);  // records repeat per file
  // Record 0: plane p pixel i holds byte (80p + i) % 256.
  EXPECT_DOUBLE_EQ(train.images.at(0, 0, 0, 0), 0.0 / 255.0);
  EXPECT_DOUBLE_EQ(train.images.at(0, 1, 0, 0), 80.0 / 255.0);
  EXPECT_DOUBLE_EQ(train.images.at(0, 2, 0, 0), 160.0 / 255.0);
  EXPECT_DOUBLE_EQ(train.images.at(0, 0, 0, 5), 5.0 / 255.0);
  EXPECT_DOUBLE_EQ(train.images.at(0, 0, 1, 0), 32.0 / 255.0);
}

TEST(LoadCifar10, AcceptsSubdirectoryLayout) {
  TempDir tmp;
  fs::create_directories(tmp.path() / "cifar-10-batches-bin");
  write_cifar_fixture(tmp.path() / "cifar-10-batches-bin");
  const auto [train, test] = load_cifar10(tmp.path());
  EXPECT_EQ(train.count(), 10);
}

TEST(LoadCifar10, RejectsPartialRecords) {
  TempDir tmp;
  write_cifar_fixture(tmp.path());
  std::vector<std::uint8_t> torn = cifar_file(1);
  torn.pop_back();
  write_bytes(tmp.path() / "data_batch_3.bin", torn);
  EXPECT_THROW(load_cifar10(tmp.path()), IoError);
}

TEST(LoadCifar10, RejectsOutOfRangeLabels) {
  TempDir tmp;
  write_cifar_fixture(tmp.path());
  std::vector<std::uint8_t> bad = cifar_file(1);
  bad[0] = 11;
  write_bytes(tmp.path() / "test_batch.bin", bad);
  EXPECT_THROW(load_cifar10(tmp.path()), IoError);
}

TEST(Batches, CoversAllRowsWithShortTail) {
  const auto got = batches(10, 4, 1, false);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0].size(), 4u);
  EXPECT_EQ(got[1].size(), 4u);
  EXPECT_EQ(got[2].size(), 2u);
  std::int64_t expected = 0;
  for (const auto& batch : got)
    for (const std::int64_t row : batch) EXPECT_EQ(row, expected++);
}

TEST(Batches, ShuffleIsASeededPermutation) {
  const auto a = batches(97, 8, 42, true);
  const auto b = batches(97, 8, 42, true);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);

  std::vector<std::int64_t> flat;
  for (const auto& batch : a) flat.insert(flat.end(), batch.begin(), batch.end());
  std::vector<std::int64_t> sorted = flat;
  std::sort(sorted.begin(), sorted.end());
  for (std::int64_t i = 0; i < 97; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);

  bool moved = false;
  for (std::size_t i = 0; i < flat.size(); ++i)
    if (flat[i] != static_cast<std::int64_t>(i)) moved = true;
  EXPECT_TRUE(moved);

  const auto c = batches(97, 8, 43, true);
  std::vector<std::int64_t> flat_c;
  for (const auto& batch : c) flat_c.insert(flat_c.end(), batch.begin(), batch.end());
  EXPECT_NE(flat, flat_c);
}

TEST(Batches, Validation) {
  EXPECT_THROW(batches(10, 0, 1, false), ParamError);
  EXPECT_THROW(batches(-1, 4, 1, false), ParamError);
  EXPECT_TRUE(batches(0, 4, 1, false).empty());
}

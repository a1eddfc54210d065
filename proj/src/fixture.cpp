#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <memory>

#include "rollread/bench.hpp"
#include "rollread/trk.hpp"

namespace fs = std::filesystem;

namespace rollread::bench {

namespace {

// SplitMix64; fixed arithmetic so fixtures are byte-identical on every
// platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // [0, 1)
  float unit() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }
  std::uint32_t between(std::uint32_t lo, std::uint32_t hi) {
    return lo + static_cast<std::uint32_t>(next() % (hi - lo + 1));
  }

 private:
  std::uint64_t state_;
};

trk::TrkHeader fixture_header(const FixtureParams& params) {
  trk::TrkHeader hdr;
  hdr.dim = {128, 128, 80};
  hdr.voxel_size = {2.f, 2.f, 2.f};
  hdr.vox_to_ras = {2, 0, 0, -128, 0, 2, 0, -128, 0, 0, 2, -80, 0, 0, 0, 1};
  hdr.n_scalars = params.n_scalars;
  hdr.n_properties = params.n_properties;
  return hdr;
}

// A random walk with roughly unit steps inside the image box.
trk::Streamline random_streamline(Rng& rng, const FixtureParams& params) {
  trk::Streamline s;
  const auto n = rng.between(params.min_points, params.max_points);
  s.points.resize(n);
  trk::Point p{20.f + 200.f * rng.unit(), 20.f + 200.f * rng.unit(), 20.f + 120.f * rng.unit()};
  for (auto& point : s.points) {
    point = p;
    for (auto& c : p) c += rng.unit() * 2.f - 1.f;
  }
  s.scalars.resize(static_cast<std::size_t>(n) * params.n_scalars);
  for (auto& v : s.scalars) v = rng.unit();
  s.properties.resize(params.n_properties);
  for (auto& v : s.properties) v = rng.unit();
  return s;
}

std::string shard_name(const std::string& prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03zu", i);
  return prefix + buf + ".trk";
}

}  // namespace

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kDigits[digest[i] >> 4];
    out += kDigits[digest[i] & 0xf];
  }
  return out;
}

std::vector<FixtureFile> generate_fixtures(const fs::path& dir, const FixtureParams& params) {
  if (params.min_points == 0 || params.max_points < params.min_points) {
    throw Error(Errc::kInvalidArgument, "bad points-per-streamline range");
  }
  fs::create_directories(dir);
  std::vector<FixtureFile> files;
  for (std::size_t i = 0; i < params.shards; ++i) {
    Rng rng(params.seed * 0x100000001b3ull + i);
    FixtureFile file;
    file.key = shard_name(params.prefix, i);
    const auto path = dir / file.key;
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      trk::TrkWriter writer(out, fixture_header(params));
      while (writer.bytes_written() < params.shard_bytes) {
        writer.write(random_streamline(rng, params));
      }
      writer.finish();
      file.size = writer.bytes_written();
      file.streamlines = static_cast<std::uint64_t>(writer.count());
    }
    file.sha256 = file_sha256(path);
    files.push_back(std::move(file));
  }
  return files;
}

std::vector<FixtureFile> split_fixture(const fs::path& dir, const std::string& source_key,
                                       std::size_t shards, const std::string& prefix) {
  if (shards == 0) throw Error(Errc::kInvalidArgument, "need at least one shard");
  std::ifstream in(dir / source_key, std::ios::binary);
  if (!in) throw Error(Errc::kNotFound, source_key);
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  MemorySource src(std::move(data));
  trk::TrkReader reader(src);
  std::vector<trk::Streamline> all;
  while (auto s = reader.next()) all.push_back(std::move(*s));

  auto hdr = reader.header();
  hdr.n_count = 0;
  std::vector<FixtureFile> files;
  std::size_t next = 0;
  for (std::size_t i = 0; i < shards; ++i) {
    const std::size_t count = all.size() / shards + (i < all.size() % shards ? 1 : 0);
    FixtureFile file;
    file.key = shard_name(prefix, i);
    const auto path = dir / file.key;
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      trk::TrkWriter writer(out, hdr);
      for (std::size_t k = 0; k < count; ++k) writer.write(all[next++]);
      writer.finish();
      file.size = writer.bytes_written();
      file.streamlines = count;
    }
    file.sha256 = file_sha256(path);
    files.push_back(std::move(file));
  }
  return files;
}

}  // namespace rollread::bench

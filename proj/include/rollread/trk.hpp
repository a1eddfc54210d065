#pragma once

// TrackVis .trk streamline files (version 2, little-endian).
//
// A file is a 1000-byte header followed by records:
//   int32 n_points
//   n_points * (3 + n_scalars) float32   x y z s0 s1 ...
//   n_properties float32
// Records are decoded one at a time straight from a ByteSource, with three
// reads per record, so a multi-gigabyte file never has to sit in memory.

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "rollread/error.hpp"
#include "rollread/reader.hpp"

namespace rollread::trk {

inline constexpr std::size_t kHeaderSize = 1000;
inline constexpr std::uint32_t kDefaultMaxPoints = 1'000'000;

using Name = std::array<char, 20>;
using Point = std::array<float, 3>;

struct TrkHeader {
  std::array<char, 6> magic{'T', 'R', 'A', 'C', 'K', '\0'};
  std::array<std::int16_t, 3> dim{0, 0, 0};
  std::array<float, 3> voxel_size{1.f, 1.f, 1.f};
  std::array<float, 3> origin{0.f, 0.f, 0.f};
  std::int16_t n_scalars = 0;
  std::array<Name, 10> scalar_names{};
  std::int16_t n_properties = 0;
  std::array<Name, 10> property_names{};
  // Row-major 4x4.
  std::array<float, 16> vox_to_ras{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  std::array<char, 4> voxel_order{'R', 'A', 'S', '\0'};
  std::array<float, 6> image_orientation_patient{};
  std::array<std::uint8_t, 6> invert_swap{};  // invert_x/y/z, swap_xy/yz/zx
  std::int32_t n_count = 0;  // 0 means unknown
  std::int32_t version = 2;
  std::int32_t header_size = static_cast<std::int32_t>(kHeaderSize);

  bool operator==(const TrkHeader&) const = default;
};

struct Streamline {
  std::vector<Point> points;
  std::vector<float> scalars;     // n_points * n_scalars, point-major
  std::vector<float> properties;  // n_properties

  bool operator==(const Streamline&) const = default;
};

// Throws BadMagic, BadHeaderSize, UnsupportedVersion.
TrkHeader parse_header(std::span<const std::uint8_t> raw);
std::array<std::uint8_t, kHeaderSize> encode_header(const TrkHeader& hdr);

// Reads one record; nullopt at a clean end of data. Throws TruncatedRecord,
// CorruptCount (n == 0 or n > max_points).
std::optional<Streamline> next_streamline(ByteSource& src, const TrkHeader& hdr,
                                          std::uint32_t max_points = kDefaultMaxPoints);

struct AffineOptions {
  // Points are stored in voxel-mm; subtract half a voxel before the affine.
  bool half_voxel_shift = true;
};

// Maps stored coordinates to world millimeters: p / voxel_size (- 0.5), then
// vox_to_ras. Throws SingularAffine if the bottom row is not (0, 0, 0, 1).
Streamline apply_affine(const TrkHeader& hdr, Streamline s, AffineOptions options = {});

double streamline_length(const Streamline& s);

// Throws InconsistentCounts when a record disagrees with the header counts.
Bytes write_trk(const TrkHeader& hdr, std::span<const Streamline> streamlines);

// Streams records to `out`; finish() patches n_count in the header.
class TrkWriter {
 public:
  TrkWriter(std::ostream& out, TrkHeader hdr);
  void write(const Streamline& s);
  std::uint64_t bytes_written() const { return bytes_; }
  std::int32_t count() const { return count_; }
  void finish();

 private:
  std::ostream& out_;
  TrkHeader hdr_;
  std::uint64_t bytes_ = 0;
  std::int32_t count_ = 0;
};

// Iterates records across consecutive .trk files read through one stream.
// With file sizes known, a new header is read at every file boundary;
// otherwise the stream is treated as a single file.
class TrkReader {
 public:
  explicit TrkReader(ByteSource& src, std::vector<std::uint64_t> file_sizes = {},
                     std::uint32_t max_points = kDefaultMaxPoints);

  const TrkHeader& header() const { return header_; }
  std::optional<Streamline> next();
  std::uint64_t records() const { return records_; }

 private:
  void read_header();

  ByteSource& src_;
  std::vector<std::uint64_t> file_sizes_;
  std::uint32_t max_points_;
  std::size_t file_ = 0;
  std::uint64_t file_end_ = 0;
  TrkHeader header_;
  std::uint64_t records_ = 0;
};

struct LengthHistogram {
  std::vector<double> bin_edges;  // n_bins + 1, strictly increasing
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
};

// Equal-width bins over [min, max] of the data, or over `range` when given
// (values outside it land in the edge bins). A zero-width range is widened
// at the top by a few ulps so every value lands in bin 0.
LengthHistogram histogram(std::span<const double> values, std::size_t n_bins = 20,
                          std::optional<std::pair<double, double>> range = {});

// One lazy pass over the reader keeping only lengths (in world mm).
// Throws EmptyFile when there are no streamlines.
LengthHistogram length_histogram(TrkReader& reader, std::size_t n_bins = 20,
                                 std::optional<std::pair<double, double>> range = {},
                                 AffineOptions affine = {});

}  // namespace rollread::trk

#include "rollread/trk.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace rollread::trk {

namespace {

constexpr std::size_t kOffDim = 6;
constexpr std::size_t kOffVoxelSize = 12;
constexpr std::size_t kOffOrigin = 24;
constexpr std::size_t kOffNScalars = 36;
constexpr std::size_t kOffScalarNames = 38;
constexpr std::size_t kOffNProperties = 238;
constexpr std::size_t kOffPropertyNames = 240;
constexpr std::size_t kOffVoxToRas = 440;
constexpr std::size_t kOffVoxelOrder = 948;
constexpr std::size_t kOffOrientation = 956;
constexpr std::size_t kOffInvertSwap = 982;
constexpr std::size_t kOffNCount = 988;
constexpr std::size_t kOffVersion = 992;
constexpr std::size_t kOffHeaderSize = 996;

template <class T>
T load_le(const std::uint8_t* p) {
  std::array<std::uint8_t, sizeof(T)> b;
  std::memcpy(b.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  return std::bit_cast<T>(b);
}

template <class T>
void store_le(std::uint8_t* p, T value) {
  auto b = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  std::memcpy(p, b.data(), sizeof(T));
}

template <class T, std::size_t N>
void load_array(const std::uint8_t* p, std::array<T, N>& out) {
  for (std::size_t i = 0; i < N; ++i) out[i] = load_le<T>(p + i * sizeof(T));
}

template <class T, std::size_t N>
void store_array(std::uint8_t* p, const std::array<T, N>& in) {
  for (std::size_t i = 0; i < N; ++i) store_le<T>(p + i * sizeof(T), in[i]);
}

void decode_floats(std::span<const std::uint8_t> raw, float* out) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out, raw.data(), raw.size());
  } else {
    for (std::size_t i = 0; i < raw.size() / 4; ++i) out[i] = load_le<float>(raw.data() + 4 * i);
  }
}

void encode_floats(std::span<const float> values, std::uint8_t* out) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out, values.data(), values.size_bytes());
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) store_le<float>(out + 4 * i, values[i]);
  }
}

void check_counts(const TrkHeader& hdr, const Streamline& s) {
  if (s.points.empty()) throw Error(Errc::kInconsistentCounts, "streamline without points");
  if (s.scalars.size() != s.points.size() * static_cast<std::size_t>(hdr.n_scalars)) {
    throw Error(Errc::kInconsistentCounts, "scalar count does not match n_scalars");
  }
  if (s.properties.size() != static_cast<std::size_t>(hdr.n_properties)) {
    throw Error(Errc::kInconsistentCounts, "property count does not match n_properties");
  }
}

Bytes encode_record(const TrkHeader& hdr, const Streamline& s) {
  check_counts(hdr, s);
  const std::size_t per_point = 3 + static_cast<std::size_t>(hdr.n_scalars);
  std::vector<float> values;
  values.reserve(s.points.size() * per_point);
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    values.insert(values.end(), s.points[i].begin(), s.points[i].end());
    auto first = s.scalars.begin() + static_cast<std::ptrdiff_t>(i * hdr.n_scalars);
    values.insert(values.end(), first, first + hdr.n_scalars);
  }
  values.insert(values.end(), s.properties.begin(), s.properties.end());

  Bytes out(4 + 4 * values.size());
  store_le<std::int32_t>(out.data(), static_cast<std::int32_t>(s.points.size()));
  encode_floats(values, out.data() + 4);
  return out;
}

}  // namespace

TrkHeader parse_header(std::span<const std::uint8_t> raw) {
  if (raw.size() != kHeaderSize) {
    throw Error(Errc::kBadHeaderSize, "header needs 1000 bytes, got " + std::to_string(raw.size()));
  }
  const auto* p = raw.data();
  TrkHeader hdr;
  std::memcpy(hdr.magic.data(), p, hdr.magic.size());
  if (std::memcmp(p, "TRACK", 5) != 0) throw Error(Errc::kBadMagic, "not a .trk file");

  hdr.header_size = load_le<std::int32_t>(p + kOffHeaderSize);
  if (hdr.header_size != static_cast<std::int32_t>(kHeaderSize)) {
    throw Error(Errc::kBadHeaderSize, "hdr_size field is " + std::to_string(hdr.header_size));
  }
  hdr.version = load_le<std::int32_t>(p + kOffVersion);
  if (hdr.version != 2) {
    throw Error(Errc::kUnsupportedVersion, "version " + std::to_string(hdr.version));
  }

  load_array(p + kOffDim, hdr.dim);
  load_array(p + kOffVoxelSize, hdr.voxel_size);
  load_array(p + kOffOrigin, hdr.origin);
  hdr.n_scalars = load_le<std::int16_t>(p + kOffNScalars);
  hdr.n_properties = load_le<std::int16_t>(p + kOffNProperties);
  if (hdr.n_scalars < 0 || hdr.n_properties < 0) {
    throw Error(Errc::kInconsistentCounts, "negative scalar or property count");
  }
  for (std::size_t i = 0; i < 10; ++i) {
    std::memcpy(hdr.scalar_names[i].data(), p + kOffScalarNames + 20 * i, 20);
    std::memcpy(hdr.property_names[i].data(), p + kOffPropertyNames + 20 * i, 20);
  }
  load_array(p + kOffVoxToRas, hdr.vox_to_ras);
  std::memcpy(hdr.voxel_order.data(), p + kOffVoxelOrder, 4);
  load_array(p + kOffOrientation, hdr.image_orientation_patient);
  std::memcpy(hdr.invert_swap.data(), p + kOffInvertSwap, 6);
  hdr.n_count = load_le<std::int32_t>(p + kOffNCount);
  return hdr;
}

std::array<std::uint8_t, kHeaderSize> encode_header(const TrkHeader& hdr) {
  std::array<std::uint8_t, kHeaderSize> raw{};
  auto* p = raw.data();
  std::memcpy(p, hdr.magic.data(), hdr.magic.size());
  store_array(p + kOffDim, hdr.dim);
  store_array(p + kOffVoxelSize, hdr.voxel_size);
  store_array(p + kOffOrigin, hdr.origin);
  store_le(p + kOffNScalars, hdr.n_scalars);
  store_le(p + kOffNProperties, hdr.n_properties);
  for (std::size_t i = 0; i < 10; ++i) {
    std::memcpy(p + kOffScalarNames + 20 * i, hdr.scalar_names[i].data(), 20);
    std::memcpy(p + kOffPropertyNames + 20 * i, hdr.property_names[i].data(), 20);
  }
  store_array(p + kOffVoxToRas, hdr.vox_to_ras);
  std::memcpy(p + kOffVoxelOrder, hdr.voxel_order.data(), 4);
  store_array(p + kOffOrientation, hdr.image_orientation_patient);
  std::memcpy(p + kOffInvertSwap, hdr.invert_swap.data(), 6);
  store_le(p + kOffNCount, hdr.n_count);
  store_le(p + kOffVersion, hdr.version);
  store_le(p + kOffHeaderSize, hdr.header_size);
  return raw;
}

std::optional<Streamline> next_streamline(ByteSource& src, const TrkHeader& hdr,
                                          std::uint32_t max_points) {
  std::array<std::uint8_t, 4> count_raw;
  const auto got = src.read(std::span<std::uint8_t>(count_raw));
  if (got == 0) return std::nullopt;
  if (got != count_raw.size()) throw Error(Errc::kTruncatedRecord, "partial point count");

  const auto n = load_le<std::int32_t>(count_raw.data());
  if (n <= 0 || static_cast<std::uint32_t>(n) > max_points) {
    throw Error(Errc::kCorruptCount, "point count " + std::to_string(n));
  }

  const std::size_t points = static_cast<std::size_t>(n);
  const std::size_t per_point = 3 + static_cast<std::size_t>(hdr.n_scalars);
  Bytes body(4 * points * per_point);
  if (src.read(std::span<std::uint8_t>(body)) != body.size()) {
    throw Error(Errc::kTruncatedRecord, "record ends inside its points");
  }
  Bytes props(4 * static_cast<std::size_t>(hdr.n_properties));
  if (src.read(std::span<std::uint8_t>(props)) != props.size()) {
    throw Error(Errc::kTruncatedRecord, "record ends inside its properties");
  }

  std::vector<float> values(points * per_point);
  decode_floats(body, values.data());

  Streamline s;
  s.points.resize(points);
  s.scalars.reserve(points * hdr.n_scalars);
  for (std::size_t i = 0; i < points; ++i) {
    const float* row = values.data() + i * per_point;
    s.points[i] = {row[0], row[1], row[2]};
    s.scalars.insert(s.scalars.end(), row + 3, row + per_point);
  }
  s.properties.resize(hdr.n_properties);
  decode_floats(props, s.properties.data());
  return s;
}

Streamline apply_affine(const TrkHeader& hdr, Streamline s, AffineOptions options) {
  const auto& m = hdr.vox_to_ras;
  if (m[12] != 0.f || m[13] != 0.f || m[14] != 0.f || m[15] != 1.f) {
    throw Error(Errc::kSingularAffine, "vox_to_ras bottom row is not (0, 0, 0, 1)");
  }
  const double shift = options.half_voxel_shift ? 0.5 : 0.0;
  for (auto& p : s.points) {
    double v[3];
    for (int k = 0; k < 3; ++k) {
      const double size = hdr.voxel_size[k] == 0.f ? 1.0 : hdr.voxel_size[k];
      v[k] = p[k] / size - shift;
    }
    for (int r = 0; r < 3; ++r) {
      p[r] = static_cast<float>(m[4 * r] * v[0] + m[4 * r + 1] * v[1] + m[4 * r + 2] * v[2] +
                                m[4 * r + 3]);
    }
  }
  return s;
}

double streamline_length(const Streamline& s) {
  double total = 0;
  for (std::size_t i = 1; i < s.points.size(); ++i) {
    const auto& a = s.points[i - 1];
    const auto& b = s.points[i];
    const double dx = double(b[0]) - a[0], dy = double(b[1]) - a[1], dz = double(b[2]) - a[2];
    total += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return total;
}

Bytes write_trk(const TrkHeader& hdr, std::span<const Streamline> streamlines) {
  auto header = encode_header(hdr);
  Bytes out(header.begin(), header.end());
  for (const auto& s : streamlines) {
    auto rec = encode_record(hdr, s);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

TrkWriter::TrkWriter(std::ostream& out, TrkHeader hdr) : out_(out), hdr_(hdr) {
  auto raw = encode_header(hdr_);
  out_.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  bytes_ = raw.size();
}

void TrkWriter::write(const Streamline& s) {
  auto rec = encode_record(hdr_, s);
  out_.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  bytes_ += rec.size();
  ++count_;
}

void TrkWriter::finish() {
  std::array<std::uint8_t, 4> raw;
  store_le(raw.data(), count_);
  const auto end = out_.tellp();
  out_.seekp(static_cast<std::streamoff>(kOffNCount));
  out_.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  out_.seekp(end);
  out_.flush();
  if (!out_) throw Error(Errc::kIoError, "failed writing .trk stream");
}

TrkReader::TrkReader(ByteSource& src, std::vector<std::uint64_t> file_sizes,
                     std::uint32_t max_points)
    : src_(src), file_sizes_(std::move(file_sizes)), max_points_(max_points) {
  if (!file_sizes_.empty()) file_end_ = src_.position() + file_sizes_.front();
  read_header();
}

void TrkReader::read_header() {
  std::array<std::uint8_t, kHeaderSize> raw;
  const auto got = src_.read(std::span<std::uint8_t>(raw));
  header_ = parse_header(std::span<const std::uint8_t>(raw.data(), got));
}

std::optional<Streamline> TrkReader::next() {
  if (!file_sizes_.empty()) {
    // Move past finished files, reading each new file's header.
    while (src_.position() >= file_end_ && file_ + 1 < file_sizes_.size()) {
      if (src_.position() > file_end_) {
        throw Error(Errc::kTruncatedRecord, "record crosses a file boundary");
      }
      ++file_;
      file_end_ += file_sizes_[file_];
      if (file_sizes_[file_] > 0) read_header();
    }
  }
  auto s = next_streamline(src_, header_, max_points_);
  if (s) {
    ++records_;
    if (!file_sizes_.empty() && src_.position() > file_end_) {
      throw Error(Errc::kTruncatedRecord, "record crosses a file boundary");
    }
  }
  return s;
}

LengthHistogram histogram(std::span<const double> values, std::size_t n_bins,
                          std::optional<std::pair<double, double>> range) {
  if (n_bins == 0) throw Error(Errc::kInvalidArgument, "need at least one bin");
  if (values.empty()) throw Error(Errc::kEmptyFile, "no values to bin");
  double lo, hi;
  if (range) {
    std::tie(lo, hi) = *range;
    if (!(hi > lo)) throw Error(Errc::kInvalidArgument, "histogram range must be increasing");
  } else {
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
    if (hi == lo) {
      hi = lo + 4.0 * static_cast<double>(n_bins) * std::numeric_limits<double>::epsilon() *
                    std::max(1.0, std::abs(lo));
    }
  }

  LengthHistogram h;
  h.bin_edges.resize(n_bins + 1);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t i = 0; i <= n_bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
  h.bin_edges.back() = hi;
  h.counts.assign(n_bins, 0);
  for (double v : values) {
    // Edge-exact placement: the bin is the last edge <= v, top edge inclusive.
    auto it = std::upper_bound(h.bin_edges.begin(), h.bin_edges.end(), v);
    auto bin = static_cast<std::ptrdiff_t>(it - h.bin_edges.begin()) - 1;
    bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(n_bins) - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  h.total = values.size();
  return h;
}

LengthHistogram length_histogram(TrkReader& reader, std::size_t n_bins,
                                 std::optional<std::pair<double, double>> range,
                                 AffineOptions affine) {
  std::vector<double> lengths;
  while (auto s = reader.next()) {
    lengths.push_back(streamline_length(apply_affine(reader.header(), std::move(*s), affine)));
  }
  if (lengths.empty()) throw Error(Errc::kEmptyFile, "no streamlines");
  return histogram(lengths, n_bins, range);
}

}  // namespace rollread::trk

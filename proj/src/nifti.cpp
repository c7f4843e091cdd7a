#include "mist/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "mist/log.hpp"

namespace mist::nifti {

namespace {

// ---- little-endian scalar codec (host-endianness independent) ----

std::uint16_t load_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t load_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint64_t load_u64(const std::uint8_t* p) {
  return static_cast<std::uint64_t>(load_u32(p)) |
         (static_cast<std::uint64_t>(load_u32(p + 4)) << 32);
}

void store_u16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v & 0xff);
  p[1] = static_cast<std::uint8_t>((v >> 8) & 0xff);
}
void store_u32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    p[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
}
void store_u64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    p[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
}

std::uint16_t bswap16(std::uint16_t v) {
  return static_cast<std::uint16_t>((v >> 8) | (v << 8));
}
std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000ff00u) | ((v << 8) & 0x00ff0000u) |
         (v << 24);
}
std::uint64_t bswap64(std::uint64_t v) {
  return (static_cast<std::uint64_t>(bswap32(static_cast<std::uint32_t>(v)))
          << 32) |
         bswap32(static_cast<std::uint32_t>(v >> 32));
}

struct Reader {
  const std::uint8_t* base;
  bool swap;

  std::int16_t i16(std::size_t off) const {
    std::uint16_t v = load_u16(base + off);
    if (swap) v = bswap16(v);
    return std::bit_cast<std::int16_t>(v);
  }
  std::int32_t i32(std::size_t off) const {
    std::uint32_t v = load_u32(base + off);
    if (swap) v = bswap32(v);
    return std::bit_cast<std::int32_t>(v);
  }
  float f32(std::size_t off) const {
    std::uint32_t v = load_u32(base + off);
    if (swap) v = bswap32(v);
    return std::bit_cast<float>(v);
  }
};

constexpr std::size_t kHeaderSize = 348;

bool magic_ok(const std::array<char, 4>& magic) {
  return (magic[0] == 'n' && magic[1] == '+' && magic[2] == '1' &&
          magic[3] == '\0') ||
         (magic[0] == 'n' && magic[1] == 'i' && magic[2] == '1' &&
          magic[3] == '\0');
}

bool is_pair_magic(const std::array<char, 4>& magic) {
  return magic[1] == 'i';
}

Datatype to_datatype(std::int16_t code) {
  switch (code) {
    case 2:
    case 4:
    case 8:
    case 16:
    case 64:
    case 512:
    case 768:
    case 1024:
    case 1280:
      return static_cast<Datatype>(code);
    default:
      throw Error(ErrorCode::UnsupportedDatatype,
                  "NIfTI datatype code " + std::to_string(code) +
                      " is not supported");
  }
}

// ---- quaternion <-> rotation (NIfTI-1 reference conventions) ----

Mat3 quaternion_to_rotation(double b, double c, double d, double qfac) {
  double a = 1.0 - (b * b + c * c + d * d);
  if (a < 1e-7) {
    const double norm = 1.0 / std::sqrt(b * b + c * c + d * d);
    b *= norm;
    c *= norm;
    d *= norm;
    a = 0.0;
  } else {
    a = std::sqrt(a);
  }
  Mat3 r;
  r.col[0] = {a * a + b * b - c * c - d * d, 2 * b * c + 2 * a * d,
              2 * b * d - 2 * a * c};
  r.col[1] = {2 * b * c - 2 * a * d, a * a + c * c - b * b - d * d,
              2 * c * d + 2 * a * b};
  r.col[2] = {2 * b * d + 2 * a * c, 2 * c * d - 2 * a * b,
              a * a + d * d - b * b - c * c};
  for (int row = 0; row < 3; ++row) r.col[2][row] *= qfac;
  return r;
}

struct Quaternion {
  double a, b, c, d;
  double qfac;
};

Quaternion rotation_to_quaternion(Mat3 r) {
  double qfac = 1.0;
  if (r.determinant() < 0.0) {
    qfac = -1.0;
    for (int row = 0; row < 3; ++row) r.col[2][row] *= -1.0;
  }
  const double r11 = r.col[0][0], r12 = r.col[1][0], r13 = r.col[2][0];
  const double r21 = r.col[0][1], r22 = r.col[1][1], r23 = r.col[2][1];
  const double r31 = r.col[0][2], r32 = r.col[1][2], r33 = r.col[2][2];

  double a = r11 + r22 + r33 + 1.0;
  double b, c, d;
  if (a > 0.5) {
    a = 0.5 * std::sqrt(a);
    b = 0.25 * (r32 - r23) / a;
    c = 0.25 * (r13 - r31) / a;
    d = 0.25 * (r21 - r12) / a;
  } else {
    const double xd = 1.0 + r11 - (r22 + r33);
    const double yd = 1.0 + r22 - (r11 + r33);
    const double zd = 1.0 + r33 - (r11 + r22);
    if (xd > 1.0) {
      b = 0.5 * std::sqrt(xd);
      a = 0.25 * (r32 - r23) / b;
      c = 0.25 * (r12 + r21) / b;
      d = 0.25 * (r13 + r31) / b;
    } else if (yd > 1.0) {
      c = 0.5 * std::sqrt(yd);
      a = 0.25 * (r13 - r31) / c;
      b = 0.25 * (r12 + r21) / c;
      d = 0.25 * (r23 + r32) / c;
    } else {
      d = 0.5 * std::sqrt(zd);
      a = 0.25 * (r21 - r12) / d;
      b = 0.25 * (r13 + r31) / d;
      c = 0.25 * (r23 + r32) / d;
    }
    if (a < 0.0) {
      a = -a;
      b = -b;
      c = -c;
      d = -d;
    }
  }
  return Quaternion{a, b, c, d, qfac};
}

// NIfTI physical coordinates are RAS+; the internal frame is RAI
// (+z Inferior), so the z component of every physical vector is negated.
Vec3 ras_to_rai(const Vec3& v) { return {v[0], v[1], -v[2]}; }

struct FileGeometry {
  Vec3 spacing{1, 1, 1};
  Vec3 origin{0, 0, 0};
  Mat3 direction;
};

FileGeometry geometry_from_header(const NiftiHeader& h) {
  FileGeometry g;
  for (int a = 0; a < 3; ++a) {
    const double s = std::abs(static_cast<double>(
        h.pixdim[static_cast<std::size_t>(a + 1)]));
    if (s <= 0.0)
      throw Error(ErrorCode::CorruptHeader,
                  "pixdim[" + std::to_string(a + 1) + "] is not positive");
    g.spacing[static_cast<std::size_t>(a)] = s;
  }

  if (h.sform_code > 0) {
    const std::array<const std::array<float, 4>*, 3> rows{&h.srow_x, &h.srow_y,
                                                          &h.srow_z};
    Mat3 ras;
    for (int j = 0; j < 3; ++j) {
      Vec3 col{(*rows[0])[static_cast<std::size_t>(j)],
               (*rows[1])[static_cast<std::size_t>(j)],
               (*rows[2])[static_cast<std::size_t>(j)]};
      const double norm =
          std::sqrt(col[0] * col[0] + col[1] * col[1] + col[2] * col[2]);
      if (norm == 0.0)
        throw Error(ErrorCode::CorruptHeader, "sform has a zero column");
      ras.col[static_cast<std::size_t>(j)] = {col[0] / norm, col[1] / norm,
                                              col[2] / norm};
    }
    Vec3 origin_ras{(*rows[0])[3], (*rows[1])[3], (*rows[2])[3]};
    for (int j = 0; j < 3; ++j)
      g.direction.col[static_cast<std::size_t>(j)] =
          ras_to_rai(ras.col[static_cast<std::size_t>(j)]);
    g.origin = ras_to_rai(origin_ras);
  } else if (h.qform_code > 0) {
    const double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;
    Mat3 ras = quaternion_to_rotation(h.quatern_b, h.quatern_c, h.quatern_d,
                                      qfac);
    for (int j = 0; j < 3; ++j)
      g.direction.col[static_cast<std::size_t>(j)] =
          ras_to_rai(ras.col[static_cast<std::size_t>(j)]);
    g.origin = ras_to_rai(Vec3{h.qoffset_x, h.qoffset_y, h.qoffset_z});
  }
  return g;
}

struct ShapeInfo {
  Index3 shape;
  std::int64_t channels;
};

ShapeInfo shape_from_header(const NiftiHeader& h) {
  const int nd = h.dim[0];
  if (nd < 3)
    throw Error(ErrorCode::DimensionUnsupported,
                "spatial rank is below 3 (dim[0]=" + std::to_string(nd) + ")");
  Index3 shape{h.dim[1], h.dim[2], h.dim[3]};
  for (int a = 0; a < 3; ++a) {
    if (shape[static_cast<std::size_t>(a)] < 1)
      throw Error(ErrorCode::CorruptHeader,
                  "spatial dimension " + std::to_string(a + 1) +
                      " is not positive");
  }
  std::int64_t channels = 1;
  if (nd >= 4) channels = std::max<std::int64_t>(1, h.dim[4]);
  for (int d = 5; d <= nd; ++d) {
    if (h.dim[static_cast<std::size_t>(d)] > 1)
      throw Error(ErrorCode::DimensionUnsupported,
                  "more than 4 populated dimensions");
  }
  return ShapeInfo{shape, channels};
}

double decode_element(const std::uint8_t* p, Datatype dt, bool swap) {
  switch (dt) {
    case Datatype::uint8:
      return static_cast<double>(*p);
    case Datatype::int16: {
      std::uint16_t v = load_u16(p);
      if (swap) v = bswap16(v);
      return static_cast<double>(std::bit_cast<std::int16_t>(v));
    }
    case Datatype::uint16: {
      std::uint16_t v = load_u16(p);
      if (swap) v = bswap16(v);
      return static_cast<double>(v);
    }
    case Datatype::int32: {
      std::uint32_t v = load_u32(p);
      if (swap) v = bswap32(v);
      return static_cast<double>(std::bit_cast<std::int32_t>(v));
    }
    case Datatype::uint32: {
      std::uint32_t v = load_u32(p);
      if (swap) v = bswap32(v);
      return static_cast<double>(v);
    }
    case Datatype::float32: {
      std::uint32_t v = load_u32(p);
      if (swap) v = bswap32(v);
      return static_cast<double>(std::bit_cast<float>(v));
    }
    case Datatype::float64: {
      std::uint64_t v = load_u64(p);
      if (swap) v = bswap64(v);
      return std::bit_cast<double>(v);
    }
    case Datatype::int64: {
      std::uint64_t v = load_u64(p);
      if (swap) v = bswap64(v);
      return static_cast<double>(std::bit_cast<std::int64_t>(v));
    }
    case Datatype::uint64: {
      std::uint64_t v = load_u64(p);
      if (swap) v = bswap64(v);
      return static_cast<double>(v);
    }
  }
  throw Error(ErrorCode::UnsupportedDatatype, "unreachable datatype");
}

std::int64_t clamp_ll(double v, std::int64_t lo, std::int64_t hi) {
  const double r = std::llround(v);
  if (r < static_cast<double>(lo)) return lo;
  if (r > static_cast<double>(hi)) return hi;
  return std::llround(v);
}

void encode_element(std::uint8_t* p, double v, Datatype dt) {
  switch (dt) {
    case Datatype::uint8:
      *p = static_cast<std::uint8_t>(clamp_ll(v, 0, 255));
      return;
    case Datatype::int16:
      store_u16(p, std::bit_cast<std::uint16_t>(static_cast<std::int16_t>(
                       clamp_ll(v, -32768, 32767))));
      return;
    case Datatype::uint16:
      store_u16(p, static_cast<std::uint16_t>(clamp_ll(v, 0, 65535)));
      return;
    case Datatype::int32:
      store_u32(p, std::bit_cast<std::uint32_t>(static_cast<std::int32_t>(
                       clamp_ll(v, std::numeric_limits<std::int32_t>::min(),
                                std::numeric_limits<std::int32_t>::max()))));
      return;
    case Datatype::uint32:
      store_u32(p, static_cast<std::uint32_t>(
                       clamp_ll(v, 0, std::int64_t(0xffffffffll))));
      return;
    case Datatype::float32:
      store_u32(p, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      return;
    case Datatype::float64:
      store_u64(p, std::bit_cast<std::uint64_t>(v));
      return;
    case Datatype::int64:
      store_u64(p, std::bit_cast<std::uint64_t>(static_cast<std::int64_t>(
                       std::llround(v))));
      return;
    case Datatype::uint64:
      store_u64(p, static_cast<std::uint64_t>(std::max<std::int64_t>(
                       0, std::llround(v))));
      return;
  }
}

Datatype pick_dtype(const Volume& v, OutputDtype requested, bool allow_lossy) {
  if (requested == OutputDtype::auto_detect) {
    if (v.kind() == VoxelKind::labels) {
      float max_label = 0.0f;
      for (float x : v.data()) max_label = std::max(max_label, x);
      if (max_label < 256.0f) return Datatype::uint8;
      if (max_label < 65536.0f) return Datatype::uint16;
      return Datatype::int32;
    }
    return Datatype::float32;
  }
  const Datatype dt = static_cast<Datatype>([&] {
    switch (requested) {
      case OutputDtype::uint8: return 2;
      case OutputDtype::int16: return 4;
      case OutputDtype::int32: return 8;
      case OutputDtype::float32: return 16;
      case OutputDtype::float64: return 64;
      case OutputDtype::uint16: return 512;
      case OutputDtype::uint32: return 768;
      case OutputDtype::int64: return 1024;
      case OutputDtype::uint64: return 1280;
      default: return 16;
    }
  }());
  const bool integer_kind = dt != Datatype::float32 && dt != Datatype::float64;
  if (integer_kind && v.kind() == VoxelKind::continuous && !allow_lossy)
    throw Error(ErrorCode::LossyCast,
                "continuous data requested as an integer kind; pass "
                "allow_lossy to opt in");
  return dt;
}

}  // namespace

int bitpix_of(Datatype dt) {
  switch (dt) {
    case Datatype::uint8: return 8;
    case Datatype::int16:
    case Datatype::uint16: return 16;
    case Datatype::int32:
    case Datatype::uint32:
    case Datatype::float32: return 32;
    case Datatype::float64:
    case Datatype::int64:
    case Datatype::uint64: return 64;
  }
  throw Error(ErrorCode::UnsupportedDatatype, "unknown datatype");
}

DecodedHeader decode_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize)
    throw Error(ErrorCode::CorruptHeader,
                "buffer shorter than the 348-byte header");

  const std::int32_t native = Reader{bytes.data(), false}.i32(0);
  const std::int32_t swapped = Reader{bytes.data(), true}.i32(0);
  ByteOrder order;
  bool swap;
  if (native == 348) {
    order = ByteOrder::little;
    swap = false;
  } else if (swapped == 348) {
    order = ByteOrder::big;
    swap = true;
  } else {
    throw Error(ErrorCode::CorruptHeader,
                "sizeof_hdr is not 348 under either byte order");
  }

  Reader r{bytes.data(), swap};
  NiftiHeader h;
  h.sizeof_hdr = 348;
  for (std::size_t d = 0; d < 8; ++d)
    h.dim[d] = r.i16(40 + 2 * d);
  h.datatype_code = r.i16(70);
  h.bitpix = r.i16(72);
  for (std::size_t d = 0; d < 8; ++d)
    h.pixdim[d] = r.f32(76 + 4 * d);
  h.vox_offset = r.f32(108);
  h.scl_slope = r.f32(112);
  h.scl_inter = r.f32(116);
  h.qform_code = r.i16(252);
  h.sform_code = r.i16(254);
  h.quatern_b = r.f32(256);
  h.quatern_c = r.f32(260);
  h.quatern_d = r.f32(264);
  h.qoffset_x = r.f32(268);
  h.qoffset_y = r.f32(272);
  h.qoffset_z = r.f32(276);
  for (std::size_t j = 0; j < 4; ++j) {
    h.srow_x[j] = r.f32(280 + 4 * j);
    h.srow_y[j] = r.f32(296 + 4 * j);
    h.srow_z[j] = r.f32(312 + 4 * j);
  }
  std::memcpy(h.magic.data(), bytes.data() + 344, 4);

  if (!magic_ok(h.magic))
    throw Error(ErrorCode::BadMagic, "magic is neither \"n+1\" nor \"ni1\"");
  if (h.dim[0] < 1 || h.dim[0] > 7)
    throw Error(ErrorCode::CorruptHeader,
                "dim[0]=" + std::to_string(h.dim[0]) + " outside 1..7");
  const Datatype dt = to_datatype(h.datatype_code);
  if (h.bitpix != bitpix_of(dt))
    throw Error(ErrorCode::CorruptHeader,
                "bitpix " + std::to_string(h.bitpix) +
                    " inconsistent with datatype code " +
                    std::to_string(h.datatype_code));
  return DecodedHeader{h, order};
}

std::vector<std::uint8_t> encode_header(const NiftiHeader& h) {
  std::vector<std::uint8_t> out(kHeaderSize, 0);
  store_u32(out.data() + 0, 348);
  out[38] = 'r';  // "regular" flag, conventional
  for (std::size_t d = 0; d < 8; ++d)
    store_u16(out.data() + 40 + 2 * d,
              std::bit_cast<std::uint16_t>(h.dim[d]));
  store_u16(out.data() + 70, std::bit_cast<std::uint16_t>(h.datatype_code));
  store_u16(out.data() + 72, std::bit_cast<std::uint16_t>(h.bitpix));
  for (std::size_t d = 0; d < 8; ++d)
    store_u32(out.data() + 76 + 4 * d, std::bit_cast<std::uint32_t>(h.pixdim[d]));
  store_u32(out.data() + 108, std::bit_cast<std::uint32_t>(h.vox_offset));
  store_u32(out.data() + 112, std::bit_cast<std::uint32_t>(h.scl_slope));
  store_u32(out.data() + 116, std::bit_cast<std::uint32_t>(h.scl_inter));
  out[123] = 2;  // NIFTI_UNITS_MM
  const char descrip[] = "mist";
  std::memcpy(out.data() + 148, descrip, sizeof(descrip));
  store_u16(out.data() + 252, std::bit_cast<std::uint16_t>(h.qform_code));
  store_u16(out.data() + 254, std::bit_cast<std::uint16_t>(h.sform_code));
  store_u32(out.data() + 256, std::bit_cast<std::uint32_t>(h.quatern_b));
  store_u32(out.data() + 260, std::bit_cast<std::uint32_t>(h.quatern_c));
  store_u32(out.data() + 264, std::bit_cast<std::uint32_t>(h.quatern_d));
  store_u32(out.data() + 268, std::bit_cast<std::uint32_t>(h.qoffset_x));
  store_u32(out.data() + 272, std::bit_cast<std::uint32_t>(h.qoffset_y));
  store_u32(out.data() + 276, std::bit_cast<std::uint32_t>(h.qoffset_z));
  for (std::size_t j = 0; j < 4; ++j) {
    store_u32(out.data() + 280 + 4 * j, std::bit_cast<std::uint32_t>(h.srow_x[j]));
    store_u32(out.data() + 296 + 4 * j, std::bit_cast<std::uint32_t>(h.srow_y[j]));
    store_u32(out.data() + 312 + 4 * j, std::bit_cast<std::uint32_t>(h.srow_z[j]));
  }
  std::memcpy(out.data() + 344, h.magic.data(), 4);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad())
    throw Error(ErrorCode::IoError, "read failed for " + path.string());
  return bytes;
}

bool looks_gzipped(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gzip_compress(const std::vector<std::uint8_t>& raw) {
  z_stream strm{};
  if (deflateInit2(&strm, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error(ErrorCode::IoError, "deflateInit2 failed");
  std::vector<std::uint8_t> out;
  out.resize(deflateBound(&strm, static_cast<uLong>(raw.size())));
  strm.next_in = const_cast<Bytef*>(raw.data());
  strm.avail_in = static_cast<uInt>(raw.size());
  strm.next_out = out.data();
  strm.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&strm, Z_FINISH);
  deflateEnd(&strm);
  if (rc != Z_STREAM_END)
    throw Error(ErrorCode::IoError, "gzip compression failed");
  out.resize(out.size() - strm.avail_out);
  return out;
}

namespace {

std::vector<std::uint8_t> gzip_inflate(const std::vector<std::uint8_t>& in,
                                       std::size_t stop_after) {
  z_stream strm{};
  if (inflateInit2(&strm, 15 + 32) != Z_OK)
    throw Error(ErrorCode::IoError, "inflateInit2 failed");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  strm.next_in = const_cast<Bytef*>(in.data());
  strm.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  do {
    strm.next_out = buf;
    strm.avail_out = sizeof(buf);
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw Error(ErrorCode::IoError, "gzip decompression failed");
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - strm.avail_out));
    if (stop_after > 0 && out.size() >= stop_after) break;
  } while (rc != Z_STREAM_END);
  inflateEnd(&strm);
  return out;
}

}  // namespace

std::vector<std::uint8_t> gzip_decompress(
    const std::vector<std::uint8_t>& compressed) {
  return gzip_inflate(compressed, 0);
}

Volume read_nifti(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  if (looks_gzipped(bytes)) bytes = gzip_inflate(bytes, 0);

  const DecodedHeader decoded = decode_header(bytes);
  const NiftiHeader& h = decoded.header;
  if (is_pair_magic(h.magic))
    throw Error(ErrorCode::UnsupportedFormat,
                "paired .hdr/.img files are not supported: " + path.string());

  const ShapeInfo si = shape_from_header(h);
  const Datatype dt = to_datatype(h.datatype_code);
  const std::size_t bpp = static_cast<std::size_t>(bitpix_of(dt) / 8);
  std::int64_t offset = static_cast<std::int64_t>(h.vox_offset);
  if (offset < static_cast<std::int64_t>(kHeaderSize))
    throw Error(ErrorCode::CorruptHeader, "vox_offset below header size");

  const std::int64_t count =
      si.shape[0] * si.shape[1] * si.shape[2] * si.channels;
  if (static_cast<std::int64_t>(bytes.size()) <
      offset + count * static_cast<std::int64_t>(bpp))
    throw Error(ErrorCode::IoError, "file truncated: " + path.string());

  Volume v(si.shape, si.channels, VoxelKind::continuous);
  const FileGeometry g = geometry_from_header(h);
  v.set_spacing(g.spacing);
  v.set_origin(g.origin);
  v.set_direction(g.direction);

  const bool swap = decoded.byte_order == ByteOrder::big;
  const bool scaled = h.scl_slope != 0.0f;
  const double slope = h.scl_slope;
  const double inter = h.scl_inter;
  const std::uint8_t* src = bytes.data() + offset;
  std::int64_t nan_count = 0;
  for (std::int64_t i = 0; i < count; ++i) {
    double value = decode_element(src + static_cast<std::size_t>(i) * bpp, dt,
                                  swap);
    if (scaled) value = slope * value + inter;
    if (std::isnan(value)) {
      value = 0.0;
      ++nan_count;
    }
    v.data()[static_cast<std::size_t>(i)] = static_cast<float>(value);
  }
  if (nan_count > 0)
    log::warn("nifti", path.filename().string(),
              std::to_string(nan_count) + " NaN voxels replaced by 0");
  return v;
}

GeometryInfo read_geometry(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  if (looks_gzipped(bytes)) bytes = gzip_inflate(bytes, kHeaderSize);
  const DecodedHeader decoded = decode_header(bytes);
  const ShapeInfo si = shape_from_header(decoded.header);
  const FileGeometry g = geometry_from_header(decoded.header);
  return GeometryInfo{si.shape, si.channels, g.spacing, g.origin, g.direction};
}

void write_nifti(const Volume& volume, const std::filesystem::path& path,
                 OutputDtype dtype, bool allow_lossy) {
  const Datatype dt = pick_dtype(volume, dtype, allow_lossy);

  NiftiHeader h;
  const Index3 shape = volume.shape();
  if (volume.channels() > 1) {
    h.dim = {4,
             static_cast<std::int16_t>(shape[0]),
             static_cast<std::int16_t>(shape[1]),
             static_cast<std::int16_t>(shape[2]),
             static_cast<std::int16_t>(volume.channels()),
             1,
             1,
             1};
  } else {
    h.dim = {3,
             static_cast<std::int16_t>(shape[0]),
             static_cast<std::int16_t>(shape[1]),
             static_cast<std::int16_t>(shape[2]),
             1,
             1,
             1,
             1};
  }
  h.datatype_code = static_cast<std::int16_t>(dt);
  h.bitpix = static_cast<std::int16_t>(bitpix_of(dt));
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;

  // Internal RAI frame back to NIfTI RAS.
  Mat3 ras;
  for (int j = 0; j < 3; ++j)
    ras.col[static_cast<std::size_t>(j)] =
        ras_to_rai(volume.direction().col[static_cast<std::size_t>(j)]);
  const Vec3 origin_ras = ras_to_rai(volume.origin());

  const Quaternion q = rotation_to_quaternion(ras);
  h.qform_code = 1;
  h.sform_code = 1;
  h.quatern_b = static_cast<float>(q.b);
  h.quatern_c = static_cast<float>(q.c);
  h.quatern_d = static_cast<float>(q.d);
  h.qoffset_x = static_cast<float>(origin_ras[0]);
  h.qoffset_y = static_cast<float>(origin_ras[1]);
  h.qoffset_z = static_cast<float>(origin_ras[2]);
  h.pixdim[0] = static_cast<float>(q.qfac);
  for (int a = 0; a < 3; ++a)
    h.pixdim[static_cast<std::size_t>(a + 1)] =
        static_cast<float>(volume.spacing()[static_cast<std::size_t>(a)]);

  for (int j = 0; j < 3; ++j) {
    const double s = volume.spacing()[static_cast<std::size_t>(j)];
    h.srow_x[static_cast<std::size_t>(j)] =
        static_cast<float>(ras.col[static_cast<std::size_t>(j)][0] * s);
    h.srow_y[static_cast<std::size_t>(j)] =
        static_cast<float>(ras.col[static_cast<std::size_t>(j)][1] * s);
    h.srow_z[static_cast<std::size_t>(j)] =
        static_cast<float>(ras.col[static_cast<std::size_t>(j)][2] * s);
  }
  h.srow_x[3] = static_cast<float>(origin_ras[0]);
  h.srow_y[3] = static_cast<float>(origin_ras[1]);
  h.srow_z[3] = static_cast<float>(origin_ras[2]);

  std::vector<std::uint8_t> bytes = encode_header(h);
  bytes.insert(bytes.end(), 4, 0);  // extension indicator: none

  const std::size_t bpp = static_cast<std::size_t>(bitpix_of(dt) / 8);
  const std::size_t count = static_cast<std::size_t>(volume.size());
  const std::size_t data_start = bytes.size();
  bytes.resize(data_start + count * bpp);
  for (std::size_t i = 0; i < count; ++i)
    encode_element(bytes.data() + data_start + i * bpp, volume.data()[i], dt);

  const bool gz = path.extension() == ".gz";
  if (gz) bytes = gzip_compress(bytes);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot open " + path.string() +
                                        " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace mist::nifti

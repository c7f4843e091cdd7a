#include "mist/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mist {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Cursor {
  const std::uint8_t* p;
  const std::uint8_t* end;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n)
      throw Error(ErrorCode::IoError, "tensor file truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

void write_tensor(const Volume& v, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(96 + v.data().size() * 4);
  const char magic[4] = {'M', 'V', 'T', '\0'};
  bytes.insert(bytes.end(), magic, magic + 4);
  put_u32(bytes, kVersion);
  put_u32(bytes, v.kind() == VoxelKind::labels ? 1u : 0u);
  put_u32(bytes, static_cast<std::uint32_t>(v.channels()));
  for (int a = 0; a < 3; ++a)
    put_u64(bytes, static_cast<std::uint64_t>(v.shape()[a]));
  for (int a = 0; a < 3; ++a) put_f64(bytes, v.spacing()[a]);
  for (int a = 0; a < 3; ++a) put_f64(bytes, v.origin()[a]);
  for (int j = 0; j < 3; ++j)
    for (int r = 0; r < 3; ++r) put_f64(bytes, v.direction().col[j][r]);
  for (float x : v.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(x));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Volume read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

  Cursor cur{bytes.data(), bytes.data() + bytes.size()};
  cur.need(4);
  if (std::memcmp(cur.p, "MVT\0", 4) != 0)
    throw Error(ErrorCode::BadMagic, "not a tensor file: " + path.string());
  cur.p += 4;
  const std::uint32_t version = cur.u32();
  if (version != kVersion)
    throw Error(ErrorCode::UnsupportedFormat,
                "tensor version " + std::to_string(version));
  const std::uint32_t kind = cur.u32();
  const std::uint32_t channels = cur.u32();
  Index3 shape;
  for (int a = 0; a < 3; ++a)
    shape[a] = static_cast<std::int64_t>(cur.u64());
  Vec3 spacing, origin;
  for (int a = 0; a < 3; ++a) spacing[a] = cur.f64();
  for (int a = 0; a < 3; ++a) origin[a] = cur.f64();
  Mat3 dir;
  for (int j = 0; j < 3; ++j)
    for (int r = 0; r < 3; ++r) dir.col[j][r] = cur.f64();

  Volume v(shape, channels,
           kind == 1 ? VoxelKind::labels : VoxelKind::continuous);
  v.set_spacing(spacing);
  v.set_origin(origin);
  v.set_direction(dir);
  for (auto& x : v.data())
    x = std::bit_cast<float>(cur.u32());
  return v;
}

}  // namespace mist

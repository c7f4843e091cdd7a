#ifndef MIST_NIFTI_HPP
#define MIST_NIFTI_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mist/volume.hpp"

namespace mist::nifti {

enum class ByteOrder { little, big };

// NIfTI-1 datatype codes (the subset segmentation pipelines produce).
enum class Datatype : std::int16_t {
  uint8 = 2,
  int16 = 4,
  int32 = 8,
  float32 = 16,
  float64 = 64,
  uint16 = 512,
  uint32 = 768,
  int64 = 1024,
  uint64 = 1280,
};

int bitpix_of(Datatype dt);

struct NiftiHeader {
  std::int32_t sizeof_hdr = 348;
  std::array<std::int16_t, 8> dim{3, 1, 1, 1, 1, 1, 1, 1};
  std::int16_t datatype_code = static_cast<std::int16_t>(Datatype::float32);
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{1, 1, 1, 1, 0, 0, 0, 0};
  float vox_offset = 352.0f;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  float quatern_b = 0, quatern_c = 0, quatern_d = 0;
  float qoffset_x = 0, qoffset_y = 0, qoffset_z = 0;
  std::array<float, 4> srow_x{0, 0, 0, 0};
  std::array<float, 4> srow_y{0, 0, 0, 0};
  std::array<float, 4> srow_z{0, 0, 0, 0};
  std::array<char, 4> magic{'n', '+', '1', '\0'};
};

struct DecodedHeader {
  NiftiHeader header;
  ByteOrder byte_order = ByteOrder::little;
};

// Decodes a 348-byte header, auto-detecting byte order via sizeof_hdr.
DecodedHeader decode_header(const std::vector<std::uint8_t>& bytes);

// Serializes a header to the canonical little-endian 348-byte layout.
std::vector<std::uint8_t> encode_header(const NiftiHeader& header);

Volume read_nifti(const std::filesystem::path& path);

// Header + geometry only (voxel data is not loaded). Used for header checks.
struct GeometryInfo {
  Index3 shape{1, 1, 1};
  std::int64_t channels = 1;
  Vec3 spacing{1, 1, 1};
  Vec3 origin{0, 0, 0};
  Mat3 direction;
};
GeometryInfo read_geometry(const std::filesystem::path& path);

enum class OutputDtype {
  auto_detect,
  uint8,
  int16,
  int32,
  float32,
  float64,
  uint16,
  uint32,
  int64,
  uint64,
};

// Writes a single-file "n+1" NIfTI-1 volume; ".gz" suffix selects gzip.
// Continuous data requested as an integer kind throws LossyCast unless
// allow_lossy is set.
void write_nifti(const Volume& volume, const std::filesystem::path& path,
                 OutputDtype dtype = OutputDtype::auto_detect,
                 bool allow_lossy = false);

// Raw file helpers shared with the converters and tests.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
bool looks_gzipped(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> gzip_compress(const std::vector<std::uint8_t>& raw);
std::vector<std::uint8_t> gzip_decompress(
    const std::vector<std::uint8_t>& compressed);

}  // namespace mist::nifti

#endif

#ifndef MIST_TESTS_NIFTI_SWAP_HPP
#define MIST_TESTS_NIFTI_SWAP_HPP

#include <cstdint>
#include <cstring>
#include <vector>

namespace mist::testing {

inline void swap_field(std::vector<std::uint8_t>& b, std::size_t off,
                       std::size_t width, std::size_t count) {
  for (std::size_t n = 0; n < count; ++n) {
    std::uint8_t* p = b.data() + off + n * width;
    for (std::size_t i = 0; i < width / 2; ++i)
      std::swap(p[i], p[width - 1 - i]);
  }
}

// Turns a little-endian single-file NIfTI byte image into its big-endian
// equivalent (header fields and voxel payload).
inline std::vector<std::uint8_t> byteswap_nifti_bytes(
    std::vector<std::uint8_t> b) {
  const std::int16_t bitpix = static_cast<std::int16_t>(b[72] | (b[73] << 8));
  float vox_offset_f;
  std::memcpy(&vox_offset_f, b.data() + 108, 4);
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);

  swap_field(b, 0, 4, 1);     // sizeof_hdr
  swap_field(b, 32, 4, 1);    // extents
  swap_field(b, 36, 2, 1);    // session_error
  swap_field(b, 40, 2, 8);    // dim
  swap_field(b, 56, 4, 3);    // intent_p*
  swap_field(b, 68, 2, 4);    // intent_code..slice_start
  swap_field(b, 76, 4, 8);    // pixdim
  swap_field(b, 108, 4, 3);   // vox_offset, scl_slope, scl_inter
  swap_field(b, 120, 2, 1);   // slice_end
  swap_field(b, 124, 4, 4);   // cal_max..toffset
  swap_field(b, 140, 4, 2);   // glmax, glmin
  swap_field(b, 252, 2, 2);   // qform_code, sform_code
  swap_field(b, 256, 4, 6);   // quatern/qoffset
  swap_field(b, 280, 4, 12);  // srow
  const std::size_t width = static_cast<std::size_t>(bitpix) / 8;
  if (width > 1)
    swap_field(b, vox_offset, width, (b.size() - vox_offset) / width);
  return b;
}

}  // namespace mist::testing

#endif

#ifndef MIST_TENSOR_IO_HPP
#define MIST_TENSOR_IO_HPP

#include <filesystem>

#include "mist/volume.hpp"

namespace mist {

// Container for preprocessed arrays: a fixed little-endian layout of
//   magic "MVT\0" | u32 version | u32 kind | u32 channels |
//   u64 shape[3] | f64 spacing[3] | f64 origin[3] | f64 direction[9] |
//   float32 data (channel-major, x fastest)
// Direction is stored column-major. Documented in the README.
void write_tensor(const Volume& v, const std::filesystem::path& path);
Volume read_tensor(const std::filesystem::path& path);

}  // namespace mist

#endif

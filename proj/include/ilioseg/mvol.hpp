#pragma once

// MVOL: a single-line UTF-8 JSON header terminated by '\n', followed by the raw
// little-endian voxel payload in x-fastest order.
//
//   {"dims":[nx,ny,nz],"dtype":"f32","kind":"image","magic":"MVOL","spacing_mm":[dx,dy,dz],"version":1}
//
// Images are stored as f32, masks as u8.

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>

#include "ilioseg/voxgrid.hpp"

namespace ilio {

using GridVariant = std::variant<Volume3D, Mask3D>;

std::string encode_mvol(const Volume3D& volume);
std::string encode_mvol(const Mask3D& mask);
GridVariant decode_mvol(std::string_view bytes);

void write_mvol(const Volume3D& volume, const std::filesystem::path& path);
void write_mvol(const Mask3D& mask, const std::filesystem::path& path);
GridVariant read_mvol(const std::filesystem::path& path);

// Typed readers; a kind mismatch raises FormatError.
Volume3D read_volume(const std::filesystem::path& path);
Mask3D read_mask(const std::filesystem::path& path);

// Writes via a sibling temporary file and renames it into place, so an
// interrupted write never leaves a partial file at `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ilio

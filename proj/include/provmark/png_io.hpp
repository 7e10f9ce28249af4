#pragma once

#include <string>

#include "provmark/datamodel.hpp"

namespace provmark {

// 8-bit RGB PNG; value v is stored as round(255*v). Throws IoError.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// single-channel 8-bit PNG for soft or binary masks
void write_mask_png(const std::string& path, const ManipulationMask& mask);
ManipulationMask read_mask_png(const std::string& path);

}  // namespace provmark

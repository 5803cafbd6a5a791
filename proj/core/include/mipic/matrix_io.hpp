#pragma once

#include <filesystem>

#include "mipic/matrix.hpp"

namespace mipic {

/// One row per non-blank line; values separated by commas and/or whitespace.
/// Lines starting with '#' are ignored. Throws InputError with "path:line".
Matrix read_matrix(const std::filesystem::path& path);

}  // namespace mipic

#pragma once

#include <string>

namespace kanwit::io {

// Reads a whole file; throws std::invalid_argument when unreadable.
std::string read_file(const std::string& path);

// Writes via a temp file in the same directory plus an atomic rename, so a
// failed run never leaves a partial artifact behind.  Creates parent
// directories as needed.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace kanwit::io

// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace pathvit {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_real(double value);

/// Rounds half away from zero to two decimals.
double round2(double value);

/// Writes bytes verbatim, replacing any existing file. Throws DataError.
void write_file(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace pathvit

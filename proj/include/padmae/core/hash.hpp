// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace padmae {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::span<const std::byte> data);
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file's full contents.
std::string sha256_file(const std::string& path);

}  // namespace padmae

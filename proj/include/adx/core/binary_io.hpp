#pragma once

// Little-endian primitives shared by the binary file formats.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace adx::binio {

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_magic(std::ostream& os, std::string_view magic);
/// u32 byte length followed by the bytes.
void write_string(std::ostream& os, std::string_view s);

std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
/// Throws DataError if the next bytes differ from magic.
void expect_magic(std::istream& is, std::string_view magic, std::string_view what);
std::string read_string(std::istream& is, std::size_t max_len = 1u << 20);
std::string read_bytes(std::istream& is, std::size_t len);

}  // namespace adx::binio

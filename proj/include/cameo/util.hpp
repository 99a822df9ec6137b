#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace cameo::util {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);  // throws CorpusFormatError

// IEEE-754 float32, little-endian, base64.
std::string encode_floats(std::span<const float> values);
std::vector<float> decode_floats(std::string_view text);

std::uint32_t crc32(std::string_view bytes);
std::string hex32(std::uint32_t value);

std::string read_file(const std::filesystem::path& path);  // throws IoError
void write_file(const std::filesystem::path& path, std::string_view contents);

// ISO-8601 UTC timestamp.
std::string utc_timestamp();

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions from workers
// are rethrown on the caller after all workers finish (first one wins).
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace cameo::util

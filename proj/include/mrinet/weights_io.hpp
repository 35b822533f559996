#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "mrinet/network.hpp"

namespace mrinet {

// Weight file layout (all integers and doubles little-endian):
//   "MRIW" | u32 version | u32 entry count
//   per entry: u32 name length | name bytes | u32 tensor count
//     per tensor: u32 rank | u64 dims[rank] | f64 values[numel]
inline constexpr std::uint32_t kWeightFormatVersion = 1;

void write_weight_store(std::ostream& os, const WeightStore& store);
// Reads one store; throws FormatError on bad magic, version, or truncation.
WeightStore read_weight_store(std::istream& is);

void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);
// Also checks the store against `spec` (names and shapes).
WeightStore load_weights(const std::filesystem::path& path, const NetworkSpec& spec);

// Little-endian primitives shared with the checkpoint format.
namespace binio {
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
void put_string(std::ostream& os, const std::string& s);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
double get_f64(std::istream& is);
std::string get_string(std::istream& is, std::size_t max_len = 1 << 20);
}  // namespace binio

}  // namespace mrinet

#include "mrinet/weights_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mrinet {

static_assert(std::endian::native == std::endian::little,
              "weight files are written with the host byte order; add swapping for big-endian");

namespace binio {

namespace {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError("unexpected end of file (truncated)");
  }
  return v;
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) { put(os, v); }
void put_u64(std::ostream& os, std::uint64_t v) { put(os, v); }
void put_f64(std::ostream& os, double v) { put(os, v); }
void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t get_u32(std::istream& is) { return get<std::uint32_t>(is); }
std::uint64_t get_u64(std::istream& is) { return get<std::uint64_t>(is); }
double get_f64(std::istream& is) { return get<double>(is); }
std::string get_string(std::istream& is, std::size_t max_len) {
  const std::uint32_t n = get_u32(is);
  if (n > max_len) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw FormatError("unexpected end of file (truncated)");
  return s;
}

}  // namespace binio

namespace {

constexpr std::array<char, 4> kMagic{'M', 'R', 'I', 'W'};

}  // namespace

void write_weight_store(std::ostream& os, const WeightStore& store) {
  os.write(kMagic.data(), kMagic.size());
  binio::put_u32(os, kWeightFormatVersion);
  binio::put_u32(os, static_cast<std::uint32_t>(store.layers.size()));
  for (const auto& [name, tensors] : store.layers) {
    binio::put_string(os, name);
    binio::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor& t : tensors) {
      binio::put_u32(os, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape().dims()) binio::put_u64(os, d);
      os.write(reinterpret_cast<const char*>(t.raw()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
  }
}

WeightStore read_weight_store(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("not a weight file (bad magic)");
  }
  const std::uint32_t version = binio::get_u32(is);
  if (version != kWeightFormatVersion) {
    throw FormatError("weight file version " + std::to_string(version) + ", expected " +
                      std::to_string(kWeightFormatVersion));
  }
  WeightStore store;
  const std::uint32_t entries = binio::get_u32(is);
  for (std::uint32_t e = 0; e < entries; ++e) {
    std::string name = binio::get_string(is, 4096);
    const std::uint32_t count = binio::get_u32(is);
    std::vector<Tensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t rank = binio::get_u32(is);
      if (rank > 8) throw FormatError("layer '" + name + "': implausible tensor rank");
      std::vector<std::int64_t> dims;
      for (std::uint32_t r = 0; r < rank; ++r) {
        const std::uint64_t d = binio::get_u64(is);
        if (d == 0 || d > (1ULL << 40)) throw FormatError("layer '" + name + "': bad dimension");
        dims.push_back(static_cast<std::int64_t>(d));
      }
      Tensor t{Shape(dims)};
      if (!is.read(reinterpret_cast<char*>(t.raw()),
                   static_cast<std::streamsize>(t.numel() * sizeof(double)))) {
        throw FormatError("layer '" + name + "': tensor data truncated");
      }
      tensors.push_back(std::move(t));
    }
    if (!store.layers.emplace(std::move(name), std::move(tensors)).second) {
      throw FormatError("duplicate layer entry in weight file");
    }
  }
  return store;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_weight_store(os, store);
  if (!os.flush()) throw std::runtime_error("write to '" + path.string() + "' failed");
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    WeightStore store = read_weight_store(is);
    if (is.peek() != std::char_traits<char>::eof()) {
      throw FormatError("trailing bytes after weight store");
    }
    return store;
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

WeightStore load_weights(const std::filesystem::path& path, const NetworkSpec& spec) {
  WeightStore store = load_weights(path);
  check_weights(spec, store);
  return store;
}

}  // namespace mrinet

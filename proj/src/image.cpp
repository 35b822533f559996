#include "mrinet/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "mrinet/error.hpp"

namespace mrinet {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is, const std::string& where) {
  std::string token;
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (std::isspace(c)) {
      if (!token.empty()) return token;
    } else {
      token.push_back(static_cast<char>(c));
    }
    c = is.get();
  }
  if (token.empty()) throw FormatError(where + ": truncated PGM header");
  return token;
}

std::size_t header_number(std::istream& is, const std::string& where) {
  const std::string t = header_token(is, where);
  if (t.empty() || t.size() > 9 ||
      t.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError(where + ": bad PGM header field '" + t + "'");
  }
  return std::stoul(t);
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + where + "'");
  char magic[2] = {0, 0};
  if (!is.read(magic, 2)) throw FormatError(where + ": empty file");
  if (magic[0] != 'P' || magic[1] != '5') {
    throw FormatError(where + ": unsupported format '" + std::string(magic, 2) +
                      "' (only binary P5 PGM is supported)");
  }
  const std::size_t width = header_number(is, where);
  const std::size_t height = header_number(is, where);
  const std::size_t maxval = header_number(is, where);
  if (width == 0 || height == 0) throw FormatError(where + ": zero image dimension");
  if (maxval != 255) {
    throw FormatError(where + ": maxval " + std::to_string(maxval) + " unsupported (need 255)");
  }
  // header_token consumed exactly one whitespace byte after maxval.
  Image img(ImageDims{width, height});
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(is.gcount()) != img.pixels.size()) {
    throw FormatError(where + ": truncated pixel data (" + std::to_string(is.gcount()) + " of " +
                      std::to_string(img.pixels.size()) + " bytes)");
  }
  return img;
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
  if (image.pixels.size() != image.width() * image.height() || image.pixels.empty()) {
    throw std::invalid_argument("write_pgm: pixel count does not match dimensions");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.pixels.data()),
           static_cast<std::streamsize>(image.pixels.size()));
  if (!os.flush()) throw std::runtime_error("write to '" + path.string() + "' failed");
}

}  // namespace mrinet

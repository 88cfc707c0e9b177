#include "fieldslam/pnm_io.hpp"

#include <fstream>

namespace fieldslam {

namespace {

void skip_pnm_whitespace(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      in.get();
    } else {
      return;
    }
  }
}

int read_pnm_int(std::istream& in, const std::filesystem::path& path) {
  skip_pnm_whitespace(in);
  int v;
  if (!(in >> v)) throw IoError("malformed PNM header in " + path.string());
  return v;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, int width, int height, const uint8_t* rgb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb), static_cast<std::streamsize>(3) * width * height);
  if (!out) throw IoError("short write to " + path.string());
}

PpmImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw IoError(path.string() + ": expected P6 PPM");
  PpmImage img;
  img.width = read_pnm_int(in, path);
  img.height = read_pnm_int(in, path);
  const int maxval = read_pnm_int(in, path);
  if (maxval != 255) throw IoError(path.string() + ": expected 8-bit PPM (maxval 255)");
  in.get();  // single whitespace after header
  img.rgb.resize(static_cast<size_t>(3) * img.width * img.height);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
    throw IoError(path.string() + ": truncated PPM payload");
  }
  return img;
}

void write_pgm16(const std::filesystem::path& path, int width, int height, const uint16_t* gray) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << width << " " << height << "\n65535\n";
  // PNM stores 16-bit samples most-significant byte first.
  std::vector<uint8_t> buf(static_cast<size_t>(2) * width * height);
  for (size_t i = 0; i < static_cast<size_t>(width) * height; ++i) {
    buf[2 * i] = static_cast<uint8_t>(gray[i] >> 8);
    buf[2 * i + 1] = static_cast<uint8_t>(gray[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Pgm16Image read_pgm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError(path.string() + ": expected P5 PGM");
  Pgm16Image img;
  img.width = read_pnm_int(in, path);
  img.height = read_pnm_int(in, path);
  const int maxval = read_pnm_int(in, path);
  if (maxval != 65535) throw IoError(path.string() + ": expected 16-bit PGM (maxval 65535)");
  in.get();
  std::vector<uint8_t> buf(static_cast<size_t>(2) * img.width * img.height);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw IoError(path.string() + ": truncated PGM payload");
  }
  img.gray.resize(static_cast<size_t>(img.width) * img.height);
  for (size_t i = 0; i < img.gray.size(); ++i) {
    img.gray[i] = static_cast<uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  }
  return img;
}

}  // namespace fieldslam

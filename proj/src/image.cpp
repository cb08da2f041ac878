#include "geoperc/image.hpp"

#include <fstream>
#include <string>

#include "geoperc/error.hpp"

namespace geoperc {

RgbImage load_ppm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw DataError(file.string() + ": not a binary 8-bit PPM");
  in.get();  // single whitespace after the header
  RgbImage img(w, h);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
    throw DataError(file.string() + ": truncated pixel data");
  return img;
}

void save_ppm(const RgbImage& img, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw DataError("cannot write " + file.string());
}

}  // namespace geoperc

#include "ideq/io.hpp"

#include <cctype>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace ideq {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

// Skips whitespace and '#' comments between PGM header tokens.
long read_pgm_token(std::istream& is) {
  for (;;) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  long value = -1;
  is >> value;
  if (!is) throw IoError("malformed PGM header");
  return value;
}

}  // namespace

void write_le_double(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  }
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le_double(std::istream& is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw IoError("truncated float64 blob");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  auto os = open_out(path);
  os << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.cols()));
  for (Eigen::Index i = 0; i < img.rows(); ++i) {
    for (Eigen::Index j = 0; j < img.cols(); ++j) {
      const double v = std::clamp(img(i, j), 0.0, 1.0);
      row[j] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw IoError(path.string() + ": not a binary PGM");
  const long width = read_pgm_token(is);
  const long height = read_pgm_token(is);
  const long maxval = read_pgm_token(is);
  if (width < 1 || height < 1 || maxval != 255) {
    throw IoError(path.string() + ": only 8-bit PGM is supported");
  }
  is.get();  // single whitespace before the raster
  Image img(height, width);
  std::vector<unsigned char> row(static_cast<std::size_t>(width));
  for (long i = 0; i < height; ++i) {
    if (!is.read(reinterpret_cast<char*>(row.data()), width)) {
      throw IoError(path.string() + ": truncated raster");
    }
    for (long j = 0; j < width; ++j) img(i, j) = row[j] / 255.0;
  }
  return img;
}

void write_blob(const std::filesystem::path& path, const Image& img) {
  auto os = open_out(path);
  os << "IDEQF64 " << img.rows() << ' ' << img.cols() << " 1 real\n";
  for (Eigen::Index i = 0; i < img.rows(); ++i) {
    for (Eigen::Index j = 0; j < img.cols(); ++j) write_le_double(os, img(i, j));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

void write_blob(const std::filesystem::path& path, const ComplexGrid& grid) {
  auto os = open_out(path);
  os << "IDEQF64 " << grid.rows() << ' ' << grid.cols() << " 1 complex\n";
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.cols(); ++j) {
      write_le_double(os, grid(i, j).real());
      write_le_double(os, grid(i, j).imag());
    }
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::variant<Image, ComplexGrid> read_blob(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string magic, kind;
  long rows = 0, cols = 0, channels = 0;
  hs >> magic >> rows >> cols >> channels >> kind;
  if (magic != "IDEQF64" || rows < 1 || cols < 1 || channels != 1) {
    throw IoError(path.string() + ": bad float64 blob header");
  }
  if (kind == "real") {
    Image img(rows, cols);
    for (long i = 0; i < rows; ++i) {
      for (long j = 0; j < cols; ++j) img(i, j) = read_le_double(is);
    }
    return img;
  }
  if (kind == "complex") {
    ComplexGrid grid(rows, cols);
    for (long i = 0; i < rows; ++i) {
      for (long j = 0; j < cols; ++j) {
        const double re = read_le_double(is);
        const double im = read_le_double(is);
        grid(i, j) = {re, im};
      }
    }
    return grid;
  }
  throw IoError(path.string() + ": unknown blob kind '" + kind + "'");
}

}  // namespace ideq

#pragma once

#include "ideq/grid.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>

namespace ideq {

struct IoError : Error {
  using Error::Error;
};

// 8-bit binary PGM (P5). Values map linearly [0,1] <-> [0,255]; writing
// clamps to [0,1] and rounds to the nearest level.
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

// Lossless float64 dump. One ASCII header line
//   IDEQF64 <rows> <cols> <channels> <real|complex>\n
// followed by little-endian doubles in row-major order; complex entries are
// stored as interleaved (re, im) pairs.
void write_blob(const std::filesystem::path& path, const Image& img);
void write_blob(const std::filesystem::path& path, const ComplexGrid& grid);
std::variant<Image, ComplexGrid> read_blob(const std::filesystem::path& path);

void write_le_double(std::ostream& os, double v);
double read_le_double(std::istream& is);

}  // namespace ideq

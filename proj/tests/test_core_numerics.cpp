#include <doctest.h>

#include "ideq/fourier.hpp"
#include "ideq/io.hpp"
#include "ideq/metrics.hpp"
#include "ideq/rng.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>

using namespace ideq;

TEST_CASE("dft2 of a constant image concentrates at DC") {
  const double c = 0.3;
  ComplexGrid k = dft2(Image(Image::Constant(4, 4, c)));
  CHECK(std::abs(k(0, 0) - std::complex<double>(4.0 * c, 0.0)) < 1e-14);
  k(0, 0) = 0.0;
  CHECK(k.abs().maxCoeff() < 1e-14);
}

TEST_CASE("dft2 / idft2 round trip and naive oracle") {
  SeededRng rng(7);
  SUBCASE("inverse identity on 8x8") {
    const Image x = oracle::random_image(rng, 8, 8);
    const ComplexGrid back = idft2(dft2(x));
    CHECK((back.real() - x).abs().maxCoeff() < 1e-10 * norm(x));
    CHECK(back.imag().abs().maxCoeff() < 1e-12);
  }
  SUBCASE("Parseval on 16x16 and agreement with the O(n^2) DFT") {
    const Image x = oracle::random_image(rng, 16, 16, -1.0, 1.0);
    const ComplexGrid k = dft2(x);
    CHECK(std::abs(k.abs2().sum() - squared_norm(x)) < 1e-10 * squared_norm(x));
    const ComplexGrid ref = oracle::naive_dft2(x.cast<std::complex<double>>());
    CHECK((k - ref).abs().maxCoeff() < 1e-10);
  }
  SUBCASE("non power of two sizes") {
    const Image x = oracle::random_image(rng, 6, 10);
    const ComplexGrid ref = oracle::naive_dft2(x.cast<std::complex<double>>());
    CHECK((dft2(x) - ref).abs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("idft2 examples") {
  CHECK(idft2(ComplexGrid::Zero(5, 3)).abs().maxCoeff() == 0.0);

  ComplexGrid dc = ComplexGrid::Zero(2, 2);
  dc(0, 0) = 1.0;
  const ComplexGrid flat = idft2(dc);
  CHECK((flat.real() - 0.5).abs().maxCoeff() < 1e-15);

  SeededRng rng(11);
  ComplexGrid spec(8, 8);
  for (Eigen::Index i = 0; i < spec.size(); ++i) spec(i) = {rng.gaussian(), rng.gaussian()};
  CHECK((idft2(spec) - oracle::naive_dft2(spec, true)).abs().maxCoeff() < 1e-10);
}

TEST_CASE("dft2 is an isometry on random inputs") {
  SeededRng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Image x = oracle::random_image(rng, 4 + trial, 12 - trial / 2, -2.0, 2.0);
    CHECK(std::abs(norm(dft2(x).abs()) - norm(x)) <= 1e-10 * norm(x));
  }
}

TEST_CASE("psnr") {
  SeededRng rng(5);
  const Image a = oracle::random_image(rng, 9, 7);
  CHECK(psnr(a, a) == kPsnrIdentical);
  CHECK(psnr(Image::Zero(4, 4), Image::Constant(4, 4, 0.1)) == doctest::Approx(20.0).epsilon(1e-12));

  const Image b = oracle::random_image(rng, 9, 7);
  double sse = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) sse += (a(i) - b(i)) * (a(i) - b(i));
  const double want = 10.0 * std::log10(1.0 / (sse / a.size()));
  CHECK(std::abs(psnr(a, b) - want) < 1e-12);

  // Scale consistency.
  CHECK(std::abs(psnr(3.5 * a, 3.5 * b, 3.5) - psnr(a, b, 1.0)) < 1e-9);

  CHECK_THROWS_AS(psnr(a, Image::Zero(3, 3)), ShapeMismatch);
  CHECK_THROWS_AS(psnr(a, b, 0.0), DomainError);
}

TEST_CASE("ssim") {
  SeededRng rng(9);
  const Image x = oracle::random_image(rng, 32, 32);
  const Image y = oracle::random_image(rng, 32, 32);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ssim(x, y) == ssim(y, x));
  CHECK(ssim(x, y) < 0.5);

  // Constant images: only the luminance term survives.
  const double a = 0.2;
  const double b = a + 0.5;
  const double c1 = 0.01 * 0.01;
  const double want = (2 * a * b + c1) / (a * a + b * b + c1);
  CHECK(std::abs(ssim(Image::Constant(16, 16, a), Image::Constant(16, 16, b)) - want) < 1e-12);

  CHECK_THROWS_AS(ssim(Image::Zero(10, 20), Image::Zero(10, 20)), ShapeMismatch);
  CHECK_THROWS_AS(ssim(x, Image::Zero(32, 31)), ShapeMismatch);
}

TEST_CASE("SeededRng streams are reproducible") {
  SeededRng a(42);
  SeededRng b(42);
  for (int i = 0; i < 1000; ++i) {
    const double ga = a.gaussian();
    const double gb = b.gaussian();
    CHECK(std::memcmp(&ga, &gb, sizeof(double)) == 0);
  }
  // Restoring a saved state continues the same stream.
  SeededRng c(99);
  c.gaussian();
  const std::string saved = c.state();
  const double next = c.gaussian();
  const double after = c.uniform();
  SeededRng d;
  d.restore(saved);
  CHECK(d.gaussian() == next);
  CHECK(d.uniform() == after);

  // Gaussian moments are sane.
  SeededRng e(1);
  double s = 0.0;
  double s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double g = e.gaussian();
    s += g;
    s2 += g * g;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("PGM and float64 blob files") {
  const auto dir = std::filesystem::temp_directory_path() / "ideq_io_test";
  std::filesystem::create_directories(dir);
  SeededRng rng(2);

  Image img(5, 7);
  for (Eigen::Index i = 0; i < img.size(); ++i) img(i) = static_cast<double>(rng.below(256)) / 255.0;
  write_pgm(dir / "a.pgm", img);
  const Image back = read_pgm(dir / "a.pgm");
  CHECK(back.rows() == 5);
  CHECK(back.cols() == 7);
  CHECK((back - img).abs().maxCoeff() == 0.0);

  // Clamping and header layout.
  write_pgm(dir / "b.pgm", Image::Constant(2, 3, 1.7));
  std::ifstream raw(dir / "b.pgm", std::ios::binary);
  std::string header((std::istreambuf_iterator<char>(raw)), {});
  CHECK(header.rfind("P5\n3 2\n255\n", 0) == 0);
  CHECK(static_cast<unsigned char>(header.back()) == 255);

  const Image x = oracle::random_image(rng, 4, 6, -1e3, 1e3);
  write_blob(dir / "x.f64", x);
  const auto xr = std::get<Image>(read_blob(dir / "x.f64"));
  CHECK((xr - x).abs().maxCoeff() == 0.0);

  ComplexGrid k(3, 2);
  for (Eigen::Index i = 0; i < k.size(); ++i) k(i) = {rng.gaussian(), rng.gaussian()};
  write_blob(dir / "k.f64", k);
  const auto kr = std::get<ComplexGrid>(read_blob(dir / "k.f64"));
  CHECK((kr - k).abs().maxCoeff() == 0.0);
  CHECK(std::filesystem::file_size(dir / "k.f64") == std::string("IDEQF64 3 2 1 complex\n").size() + 6 * 16);

  CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), IoError);
  std::filesystem::remove_all(dir);
}

#include <doctest.h>

#include "sti/analysis.hpp"
#include "sti/render.hpp"

using namespace sti;

TEST_CASE("parse_slice accepts axis letters and plane names") {
  CHECK(parse_slice("z:16").axis == SliceAxis::Z);
  CHECK(parse_slice("z:16").index == 16);
  CHECK(parse_slice("axial:3").axis == SliceAxis::Z);
  CHECK(parse_slice("coronal:0").axis == SliceAxis::Y);
  CHECK(parse_slice("sagittal:7").axis == SliceAxis::X);
  CHECK(parse_slice(" x : 2 ").index == 2);
  CHECK_THROWS_AS(parse_slice("z16"), UsageError);
  CHECK_THROWS_AS(parse_slice("w:1"), UsageError);
  CHECK_THROWS_AS(parse_slice("z:1.5"), UsageError);
  CHECK_THROWS_AS(parse_slice("z:"), UsageError);
}

TEST_CASE("window_level is linear and clamped") {
  CHECK(window_level(-1.0, 0.0, 1.0) == 0);
  CHECK(window_level(0.0, 0.0, 1.0) == 0);
  CHECK(window_level(1.0, 0.0, 1.0) == 255);
  CHECK(window_level(5.0, 0.0, 1.0) == 255);
  CHECK(window_level(0.5, 0.0, 1.0) == 128);
  CHECK(window_level(0.0, -0.05, 0.05) == 128);
  CHECK_THROWS_AS(window_level(0.0, 1.0, 1.0), UsageError);
}

TEST_CASE("mean susceptibility of the diagonal tensor through a symmetric window") {
  const Grid g({4, 4, 4});
  TensorVolume t(g);
  t.data().col(0).setConstant(0.03);
  t.data().col(3).setConstant(0.015);
  t.data().col(5).setConstant(0.015);
  const EigenMaps e = eig_decompose(t);
  const SliceImage img = render_gray(e.mms, parse_slice("z:2"), -0.05, 0.05);
  // 0.02 sits 70% of the way up a [-0.05, 0.05] window.
  for (std::uint8_t p : img.pixels) CHECK(p == 179);
  CHECK(img.window_lo == -0.05);
  CHECK(img.window_hi == 0.05);
}

TEST_CASE("slice dimensions follow the chosen axis") {
  const Grid g({5, 6, 7});
  const ScalarVolume v(g, 0.0);
  auto dims = [&](const char* s) {
    const SliceImage img = render_gray(v, parse_slice(s), 0.0, 1.0);
    CHECK(img.pixels.size() == std::size_t(img.width * img.height));
    return std::pair{img.width, img.height};
  };
  CHECK(dims("z:0") == std::pair<Index, Index>{5, 6});
  CHECK(dims("y:5") == std::pair<Index, Index>{5, 7});
  CHECK(dims("x:4") == std::pair<Index, Index>{6, 7});
  CHECK_THROWS_AS(render_gray(v, parse_slice("z:7"), 0.0, 1.0), InputError);
  CHECK_THROWS_AS(render_gray(v, parse_slice("x:-1"), 0.0, 1.0), InputError);
}

TEST_CASE("top image row is the highest voxel row") {
  const Grid g({3, 4, 2});
  ScalarVolume v(g, 0.0);
  v.data()(g.index(1, 3, 1), 0) = 1.0;
  const SliceImage img = render_gray(v, parse_slice("z:1"), 0.0, 1.0);
  CHECK(img.at(1, 0) == 255);
  Index lit = 0;
  for (std::uint8_t p : img.pixels) lit += p != 0;
  CHECK(lit == 1);
}

TEST_CASE("uniform x direction renders pure red") {
  const Grid g({6, 6, 6});
  DirectionField pev(g);
  pev.data().col(0).setConstant(-1.0);
  const ScalarVolume msa(g, 1.0);
  for (const ScalarVolume* m : {static_cast<const ScalarVolume*>(nullptr), &msa}) {
    const SliceImage img = render_pev(pev, parse_slice("axial:3"), m, 1.0);
    REQUIRE(img.channels == 3);
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x) {
        CHECK(img.at(x, y, 0) == 255);
        CHECK(img.at(x, y, 1) == 0);
        CHECK(img.at(x, y, 2) == 0);
      }
  }
}

TEST_CASE("MSA weighting scales brightness") {
  const Grid g({4, 4, 1});
  DirectionField pev(g);
  pev.data().col(2).setConstant(1.0);
  ScalarVolume msa(g, 0.0);
  msa.data()(g.index(0, 0, 0), 0) = 0.02;
  msa.data()(g.index(1, 0, 0), 0) = 0.01;
  msa.data()(g.index(2, 0, 0), 0) = 0.04;
  const SliceImage img = render_pev(pev, parse_slice("z:0"), &msa, 0.02);
  CHECK(img.at(0, 3, 2) == 255);
  CHECK(img.at(1, 3, 2) == 128);
  CHECK(img.at(2, 3, 2) == 255);
  CHECK(img.at(3, 3, 2) == 0);
  // msa_max of zero means "use the volume maximum".
  const SliceImage auto_max = render_pev(pev, parse_slice("z:0"), &msa);
  CHECK(auto_max.at(2, 3, 2) == 255);
  CHECK(auto_max.at(0, 3, 2) == 128);
}

TEST_CASE("zero volumes render black") {
  const Grid g({5, 5, 5});
  const SliceImage gray = render_gray(ScalarVolume(g, 0.0), parse_slice("y:2"), 0.0, 1.0);
  const SliceImage rgb = render_pev(DirectionField(g), parse_slice("y:2"));
  for (std::uint8_t p : gray.pixels) CHECK(p == 0);
  for (std::uint8_t p : rgb.pixels) CHECK(p == 0);
}

TEST_CASE("netpbm encoding") {
  const Grid g({3, 2, 1});
  ScalarVolume v(g, 0.5);
  const std::string pgm = encode_netpbm(render_gray(v, parse_slice("z:0"), 0.0, 1.0));
  CHECK(pgm.rfind("P5\n3 2\n255\n", 0) == 0);
  CHECK(pgm.size() == 11 + 6);
  const std::string ppm = encode_netpbm(render_pev(DirectionField(g), parse_slice("z:0")));
  CHECK(ppm.rfind("P6\n3 2\n255\n", 0) == 0);
  CHECK(ppm.size() == 11 + 18);
  // Same input, same bytes.
  CHECK(pgm == encode_netpbm(render_gray(v, parse_slice("z:0"), 0.0, 1.0)));
}

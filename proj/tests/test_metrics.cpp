#include <Eigen/Dense>

#include <cmath>

#include "doctest.h"
#include "pcc/metrics.h"
#include "test_support.h"

using namespace pcc;

using testsup::brute_plane_mse;

TEST_CASE("chamfer hand cases") {
  const std::vector<Vec3> o = {{0, 0, 0}};
  CHECK(chamfer(o, o) == doctest::Approx(0.0).epsilon(1e-12));
  const std::vector<Vec3> x = {{1, 0, 0}};
  CHECK(chamfer(o, x) == doctest::Approx(2.0).epsilon(1e-12));
  const std::vector<Vec3> two = {{0, 0, 0}, {1, 0, 0}};
  CHECK(chamfer(two, o) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(chamfer(o, two) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("chamfer symmetry and scaling behaviour") {
  const auto a = testsup::random_cloud(60, 1);
  const auto b = testsup::random_cloud(45, 2);
  CHECK(chamfer(a, b) == chamfer(b, a));

  auto shift = [](std::vector<Vec3> pts, const Vec3& t) {
    for (auto& p : pts) p = p + t;
    return pts;
  };
  const Vec3 t{0.3, -1.2, 2.0};
  CHECK(chamfer(shift(a, t), shift(b, t)) == doctest::Approx(chamfer(a, b)).epsilon(1e-9));

  auto scaled = [](std::vector<Vec3> pts, double s) {
    for (auto& p : pts) p = p * s;
    return pts;
  };
  CHECK(chamfer(scaled(a, 2.0), scaled(b, 2.0)) == doctest::Approx(4.0 * chamfer(a, b)).epsilon(1e-9));
}

TEST_CASE("point-to-point PSNR hand cases") {
  const std::vector<Vec3> a = {{0, 0, 0}};
  const std::vector<Vec3> b = {{0.1, 0, 0}};
  CHECK(psnr_d1(a, b, 1.0) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr_d1(a, a, 1.0) == std::numeric_limits<double>::infinity());
  const auto c = testsup::random_cloud(30, 3);
  const auto d = testsup::random_cloud(30, 4);
  CHECK(psnr_d1(c, d, 1.0) == psnr_d1(d, c, 1.0));
}

TEST_CASE("point-to-plane projects onto the surface normal") {
  // Plane z=0; the test point sits 0.3 along x and 0.1 along z from its
  // nearest neighbour: only the 0.1 survives the projection.
  std::vector<Vec3> plane;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      plane.push_back({1.0 * i, 1.0 * j, 0.0});
  const std::vector<Vec3> probe = {{3.3, 3.0, 0.1}};
  const double mse = brute_plane_mse(probe, plane);
  CHECK(mse == doctest::Approx(0.01).epsilon(1e-9));
  // The library path agrees on the same configuration via the PSNR value.
  const double db = psnr_d2(plane, probe, 1.0);
  // Symmetric direction: plane->probe dominates; just check agreement with
  // the oracle's symmetric MSE.
  const double mse_sym = std::max(brute_plane_mse(plane, probe), mse);
  CHECK(db == doctest::Approx(10.0 * std::log10(1.0 / mse_sym)).epsilon(1e-9));
}

TEST_CASE("plane metric never reports worse than point-to-point") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = testsup::random_cloud(64, 100 + seed);
    const auto b = testsup::random_cloud(64, 200 + seed);
    CHECK(psnr_d2(a, b, 1.0) >= psnr_d1(a, b, 1.0));
  }
}

TEST_CASE("degenerate neighbourhoods fall back to point distance") {
  // Collinear cloud: rank 1, no normal.
  std::vector<Vec3> line;
  for (int i = 0; i < 8; ++i) line.push_back({0.1 * i, 0, 0});
  const std::vector<Vec3> probe = {{0.35, 0.2, 0}};
  const double d1 = psnr_d1(line, probe, 1.0);
  const double d2 = psnr_d2(line, probe, 1.0);
  CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));
}

TEST_CASE("self-distance variance hand cases") {
  // 1-D lattice: every nearest-neighbour squared distance matches.
  std::vector<Vec3> lattice;
  for (int i = 0; i < 9; ++i) lattice.push_back({0.25 * i, 0, 0});
  CHECK(sdv(lattice) == doctest::Approx(0.0).epsilon(1e-15));

  const std::vector<Vec3> three = {{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  CHECK(sdv(three) == doctest::Approx(2.0).epsilon(1e-12));

  const std::vector<Vec3> dup = {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, {1, 1, 1}};
  CHECK(std::isfinite(sdv(dup)));

  CHECK_THROWS_AS(sdv(std::vector<Vec3>{{0, 0, 0}}), std::invalid_argument);
}

TEST_CASE("sdv invariance and scaling") {
  const auto a = testsup::random_cloud(80, 11);
  auto shifted = a;
  for (auto& p : shifted) p = p + Vec3{2, -3, 4};
  CHECK(sdv(shifted) == doctest::Approx(sdv(a)).epsilon(1e-9));
  auto scaled = a;
  for (auto& p : scaled) p = p * 3.0;
  CHECK(sdv(scaled) == doctest::Approx(81.0 * sdv(a)).epsilon(1e-9));
}

TEST_CASE("uniformity coefficient semantics") {
  const auto s = testsup::random_cloud(100, 21);
  CHECK(uniformity_coefficient(s, s) == doctest::Approx(1.0).epsilon(1e-12));

  // A perfect lattice reconstruction of a nonuniform source scores zero.
  std::vector<Vec3> lattice;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int l = 0; l < 4; ++l) lattice.push_back({0.25 * i, 0.25 * j, 0.25 * l});
  CHECK(uniformity_coefficient(lattice, s) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(uniformity_coefficient(s, lattice) == std::numeric_limits<double>::infinity());
}

TEST_CASE("tree metrics equal brute force exactly on random clouds") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t na = 2 + rng() % 255;
    const size_t nb = 2 + rng() % 255;
    const auto a = testsup::random_cloud(na, 9000 + static_cast<uint64_t>(trial));
    const auto b = testsup::random_cloud(nb, 10000 + static_cast<uint64_t>(trial));
    CHECK(chamfer(a, b) == testsup::brute_chamfer(a, b));
    CHECK(sdv(a) == testsup::brute_sdv(a));
    const double mse1 = std::max(testsup::brute_mean_min_sq(a, b), testsup::brute_mean_min_sq(b, a));
    CHECK(psnr_d1(a, b, 1.0) == doctest::Approx(10.0 * std::log10(1.0 / mse1)).epsilon(1e-15));
    if (trial % 10 == 0) {
      const double mse2 = std::max(brute_plane_mse(a, b), brute_plane_mse(b, a));
      const double want = mse2 <= 0 ? std::numeric_limits<double>::infinity()
                                    : 10.0 * std::log10(1.0 / mse2);
      CHECK(psnr_d2(a, b, 1.0) == want);
    }
  }
}

TEST_CASE("report line carries the frozen field order") {
  MetricsReport r;
  r.chamfer = 0.5;
  r.d1_psnr = 10;
  r.d2_psnr = 12;
  r.sdv_source = 1;
  r.sdv_recon = 2;
  r.uc = 2;
  CHECK(r.to_line() ==
        "chamfer=0.5 d1_psnr=10 d2_psnr=12 sdv_source=1 sdv_recon=2 uc=2");
  r.bpp = 0.25;
  CHECK(r.to_line() ==
        "chamfer=0.5 d1_psnr=10 d2_psnr=12 sdv_source=1 sdv_recon=2 uc=2 bpp=0.25");
}

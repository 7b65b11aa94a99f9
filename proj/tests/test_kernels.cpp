#include "doctest.h"

#include "fixtures.hpp"
#include "oracles.hpp"

#include "ncl/kernels.hpp"

#include <cstring>
#include <random>

using namespace ncl;

namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0;
}

struct ThreadGuard {
  ~ThreadGuard() { kernels::set_num_threads(0); }
};

}  // namespace

TEST_CASE("parallel and reference kernels agree") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int m = 2 + trial, n = 10 + 9 * trial, k = 1 + trial;
    const Vector prior = oracle::random_prior(m, rng);
    const Matrix cond = oracle::random_conditional(m, n, rng);
    const Matrix cond2 = oracle::random_conditional(m, n + 3, rng);
    const Matrix a = kernels::parallel::cooccurrence(prior, cond);
    CHECK((a - kernels::reference::cooccurrence(prior, cond)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((a - oracle::joint(prior, cond)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((kernels::parallel::cross_cooccurrence(prior, cond, cond2) -
           kernels::reference::cross_cooccurrence(prior, cond, cond2))
              .cwiseAbs()
              .maxCoeff() < 1e-15);

    const Vector p = oracle::marginal(prior, cond);
    const Matrix l = oracle::gaussian(n, k, rng), r = oracle::gaussian(n, k, rng);
    const auto par = kernels::parallel::bilinear_spectral(l, r, a, p, p, true);
    const auto ref = kernels::reference::bilinear_spectral(l, r, a, p, p, true);
    CHECK(par.alignment == doctest::Approx(ref.alignment).epsilon(1e-12));
    CHECK(par.uniformity == doctest::Approx(ref.uniformity).epsilon(1e-12));
    CHECK((par.grad_left - ref.grad_left).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((par.grad_right - ref.grad_right).cwiseAbs().maxCoeff() < 1e-12);

    const Matrix t = oracle::normalized(a, p);
    const auto pr = kernels::parallel::factor_residual(t, l, r, true);
    const auto rr = kernels::reference::factor_residual(t, l, r, true);
    CHECK(pr.residual == doctest::Approx(rr.residual).epsilon(1e-12));
    CHECK((pr.grad_left - rr.grad_left).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((pr.grad_right - rr.grad_right).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("bilinear terms match the brute-force spectral loss") {
  std::mt19937_64 rng(8);
  const auto model = fixture::random(4, 25, 2);
  const Matrix a = cooccurrence(model).raw;
  const Matrix f = oracle::gaussian(25, 3, rng);
  const auto t = kernels::parallel::bilinear_spectral(f, f, a, model.marginal(), model.marginal(), false);
  CHECK(t.alignment + t.uniformity == doctest::Approx(oracle::spectral_loss(f, a, model.marginal())).epsilon(1e-12));
  CHECK(t.grad_left.size() == 0);
}

TEST_CASE("parallel kernels are bitwise identical across thread counts") {
  ThreadGuard guard;
  std::mt19937_64 rng(9);
  const int n = 120, k = 6;
  const Vector prior = oracle::random_prior(5, rng);
  const Matrix cond = oracle::random_conditional(5, n, rng);
  const Vector p = oracle::marginal(prior, cond);
  const Matrix l = oracle::gaussian(n, k, rng), r = oracle::gaussian(n, k, rng);

  kernels::set_num_threads(1);
  const Matrix a1 = kernels::parallel::cooccurrence(prior, cond);
  const auto b1 = kernels::parallel::bilinear_spectral(l, r, a1, p, p, true);
  const auto f1 = kernels::parallel::factor_residual(a1, l, r, true);
  for (int threads : {2, 3, 4, 8}) {
    kernels::set_num_threads(threads);
    const Matrix a = kernels::parallel::cooccurrence(prior, cond);
    const auto b = kernels::parallel::bilinear_spectral(l, r, a, p, p, true);
    const auto f = kernels::parallel::factor_residual(a, l, r, true);
    CHECK(bitwise_equal(a, a1));
    CHECK(std::memcmp(&b.alignment, &b1.alignment, sizeof(double)) == 0);
    CHECK(std::memcmp(&b.uniformity, &b1.uniformity, sizeof(double)) == 0);
    CHECK(bitwise_equal(b.grad_left, b1.grad_left));
    CHECK(bitwise_equal(b.grad_right, b1.grad_right));
    CHECK(std::memcmp(&f.residual, &f1.residual, sizeof(double)) == 0);
    CHECK(bitwise_equal(f.grad_left, f1.grad_left));
  }
}

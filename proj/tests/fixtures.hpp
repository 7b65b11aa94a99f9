#pragma once

#include "ncl/error.hpp"
#include "ncl/latent_model.hpp"

#define CHECK_ERRC(expr, expected)              \
  do {                                          \
    bool thrown = false;                        \
    try {                                       \
      (void)(expr);                             \
    } catch (const ncl::Error& e) {             \
      thrown = true;                            \
      CHECK(e.code() == (expected));            \
    }                                           \
    CHECK_MESSAGE(thrown, "expected an error"); \
  } while (0)

namespace fixture {

/// m=2, N=4, uniform prior; class 0 uniform on {0,1}, class 1 on {2,3}.
inline ncl::LatentClassModel two_by_four() {
  ncl::Matrix cond(2, 4);
  cond << 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5;
  return ncl::LatentClassModel(ncl::Vector::Constant(2, 0.5), cond);
}

inline ncl::LatentClassModel one_hot(int m = 5, int n = 50) {
  ncl::ModelSpec s;
  s.preset = "one_hot";
  s.num_classes = m;
  s.num_samples = n;
  return ncl::build_model(s);
}

inline ncl::LatentClassModel random(int m, int n, std::uint64_t seed) {
  ncl::ModelSpec s;
  s.preset = "random";
  s.num_classes = m;
  s.num_samples = n;
  s.prior = "random";
  s.seed = seed;
  return ncl::build_model(s);
}

inline ncl::LatentClassModel overlap(double eps, int m = 3, int n = 30) {
  ncl::ModelSpec s;
  s.preset = "overlap";
  s.num_classes = m;
  s.num_samples = n;
  s.overlap = eps;
  return ncl::build_model(s);
}

}  // namespace fixture

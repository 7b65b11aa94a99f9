// End-to-end parameter gradients for every encoder kind x transform x loss,
// checked against central differences of the scalar loss.
#include "doctest.h"

#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace ncl;

TEST_CASE("full-pipeline gradient suite") {
  for (const auto& combo : gradcheck::all_combinations()) {
    CAPTURE(combo.label());
    const auto result = gradcheck::run(combo, 50);
    CHECK(result.checked == 50);
    CHECK(result.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradient suite skips kink-adjacent tabular entries only") {
  gradcheck::Combination c{gradcheck::EncoderKind::Tabular, TransformKind::Relu, gradcheck::LossKind::SpectralPopulation};
  const auto result = gradcheck::run(c, 50);
  CHECK(result.checked == 50);
  CHECK(result.skipped < result.checked);
}

TEST_CASE("trick gradients differ from plain relu gradients on negative pre-activations") {
  Matrix w(4, 2);
  w << -0.5, 0.8, 0.3, -1.2, 0.9, 0.4, -0.2, 0.6;
  TabularEncoder relu(w, NonNegTransform{TransformKind::Relu});
  TabularEncoder trick(w, NonNegTransform{TransformKind::ReluForwardGeluBackward});
  const auto model = fixture::random(2, 4, 1);
  const Matrix a = cooccurrence(model).raw;
  const Matrix fr = relu.encode_all().values, ft = trick.encode_all().values;
  CHECK(fr == ft);
  const Matrix up = spectral_loss_population(fr, a, model.marginal(), true).grads[0];
  const Matrix gr = relu.grad_params(up)[0], gt = trick.grad_params(up)[0];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) {
      if (w(i, j) < 0.0) {
        CHECK(gr(i, j) == 0.0);
        if (up(i, j) != 0.0) CHECK(gt(i, j) != 0.0);
      }
    }
}

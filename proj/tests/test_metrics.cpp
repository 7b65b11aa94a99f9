#include "doctest.h"

#include "fixtures.hpp"
#include "oracles.hpp"

#include "ncl/metrics.hpp"
#include "ncl/objectives.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace ncl;

namespace {

Matrix phi_of(const LatentClassModel& model, int dims = -1) {
  return ground_truth_phi(model, identity_permutation(model.num_classes()), dims).values;
}

std::vector<int> class_labels(const LatentClassModel& model) {
  return bayes_labels(model, LabelMap::identity(model.num_classes()));
}

LatentClassModel with_prior(std::vector<double> prior, int n) {
  ModelSpec s;
  s.preset = "one_hot";
  s.num_classes = static_cast<int>(prior.size());
  s.num_samples = n;
  s.prior = "explicit";
  s.prior_values = std::move(prior);
  return build_model(s);
}

/// Four equiprobable samples, each its own class: positives are identical.
LatentClassModel four_points() { return fixture::one_hot(4, 4); }

SepinConfig sepin_cfg() {
  SepinConfig c;
  c.critic_scale = 40.0;
  c.batches = 200;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("sparsity examples") {
  Matrix row(1, 4);
  row << 0.3, 0.0, 0.0, 1e-7;
  CHECK(sparsity(row).mean == doctest::Approx(0.75));
  CHECK(sparsity(Matrix::Ones(5, 3)).mean == 0.0);
  for (int m : {2, 3, 5}) {
    const auto model = fixture::one_hot(m, 10 * m);
    CHECK(sparsity(phi_of(model)).mean == doctest::Approx(static_cast<double>(m - 1) / m).epsilon(1e-15));
  }
}

TEST_CASE("correlation examples") {
  Matrix disjoint(4, 2);
  disjoint << 1, 0, 2, 0, 0, 1, 0, 3;
  CHECK(correlation_matrix(disjoint).matrix(0, 1) == 0.0);
  Matrix dup(3, 2);
  dup << 1, 1, 2, 2, 0.5, 0.5;
  CHECK(correlation_matrix(dup).matrix(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  const auto model = fixture::one_hot(4, 20);
  const Matrix c = correlation_matrix(phi_of(model)).matrix;
  CHECK((c - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-15);

  Matrix with_dead(3, 3);
  with_dead << 1, 0, 2, 3, 0, 1, 0, 0, 1;
  const auto r = correlation_matrix(with_dead);
  CHECK(r.dead == std::vector<int>{1});
  CHECK(r.live == std::vector<int>{0, 2});
  CHECK(r.matrix.diagonal().isOnes(1e-15));
  CHECK(r.matrix.cwiseAbs().maxCoeff() <= 1.0 + 1e-15);
  CHECK_ERRC(correlation_matrix(Matrix::Zero(3, 2)), Errc::AllDimensionsDead);
}

TEST_CASE("class consistency examples") {
  const auto model = fixture::one_hot(3, 12);
  const auto r = class_consistency(phi_of(model), class_labels(model));
  for (double v : r.rates) CHECK(v == 1.0);

  Matrix f(4, 2);
  f << 1, 0, 1, 0, 1, 0, 1, 0;
  const auto half = class_consistency(f, std::vector<int>{0, 0, 1, 1});
  CHECK(half.rates == std::vector<double>{0.5});
  CHECK(half.empty_dims == std::vector<int>{1});

  std::mt19937_64 rng(1);
  const int n = 2000;
  const Matrix g = oracle::gaussian(n, 8, rng);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = i % 10;
  CHECK(std::abs(class_consistency(g, labels).mean - 0.1) < 0.05);
}

TEST_CASE("expected activation examples") {
  Matrix f(3, 2);
  f << 1, 0, 0, 1, 1, 0;
  const auto ea = expected_activation(f);
  CHECK(ea.values(0) == doctest::Approx(2.0 / 3.0));
  CHECK(ea.values(1) == doctest::Approx(1.0 / 3.0));
  CHECK(select_top(ea.values, 1) == std::vector<int>{0});

  Vector tie(3);
  tie << 0.2, 0.5, 0.5;
  CHECK(select_top(tie, 3) == std::vector<int>{1, 2, 0});

  const auto skewed = with_prior({0.4, 0.6}, 10);
  const Vector w = skewed.marginal();
  const auto e = expected_activation(phi_of(skewed), &w);
  CHECK(e.values(1) > e.values(0));
  CHECK(e.values(0) == doctest::Approx(0.4));

  Matrix some_zero(3, 2);
  some_zero << 0, 0, 3, 4, 0, 0;
  CHECK(expected_activation(some_zero).zero_rows == 2);
  CHECK_ERRC(expected_activation(Matrix::Zero(2, 2)), Errc::AllRowsZero);
}

TEST_CASE("retrieval examples") {
  const auto model = fixture::one_hot(3, 36);
  CHECK(retrieval_map(phi_of(model), class_labels(model), 10).map == 1.0);

  std::vector<int> singleton(5);
  std::iota(singleton.begin(), singleton.end(), 0);
  const auto r = retrieval_map(Matrix::Identity(5, 5), singleton, 3);
  CHECK(r.map == 0.0);
  CHECK(r.zero_relevant == 5);

  const Matrix padded = phi_of(model, 6);
  const Vector w = model.marginal();
  const auto top = select_top(expected_activation(padded, &w).values, 3);
  CHECK(retrieval_map(select_columns(padded, top), class_labels(model)).map ==
        retrieval_map(padded, class_labels(model)).map);

  Matrix zero_row = Matrix::Ones(3, 2);
  zero_row.row(1).setZero();
  CHECK_ERRC(retrieval_map(zero_row, std::vector<int>{0, 0, 1}), Errc::ZeroNormFeature);
}

TEST_CASE("retrieval: precision at relevant positions and tie order") {
  // Query 0 ranks 1 (relevant) then 2 (irrelevant) then 3 (relevant).
  Matrix f(4, 2);
  f << 1, 0, 1, 0.1, 1, 0.5, 1, 2;
  const auto r = retrieval_map(f, std::vector<int>{0, 0, 1, 0}, 3);
  CHECK(r.per_query[0] == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  // Identical rows: ties go to the lower gallery index.
  Matrix same = Matrix::Ones(3, 2);
  const auto t = retrieval_map(same, std::vector<int>{0, 1, 0}, 1);
  CHECK(t.per_query[0] == 0.0);  // index 1 wins the tie and is irrelevant
  CHECK(t.per_query[2] == 1.0);  // index 0 wins and is relevant
}

TEST_CASE("alignment examples") {
  const auto model = fixture::one_hot(2, 8);
  const Matrix phi = phi_of(model);
  Matrix f(phi.rows(), 2);
  f.col(0) = 2.0 * phi.col(1);
  f.col(1) = 3.0 * phi.col(0);
  const auto r = identifiability_align(f, phi);
  CHECK(r.residual < 1e-12);
  CHECK(r.permutation == std::vector<int>{1, 0});
  CHECK(r.scale(0) == doctest::Approx(2.0));
  CHECK(r.scale(1) == doctest::Approx(3.0));

  const auto self = identifiability_align(phi, phi);
  CHECK(self.permutation == std::vector<int>{0, 1});
  CHECK(self.scale.isOnes(1e-15));
  CHECK(self.residual == 0.0);

  const Matrix rotated = phi * planar_rotation(2, 0, 1, std::acos(-1.0) / 4.0);
  const auto rot = identifiability_align(rotated, phi);
  CHECK(rot.residual > 0.1);
  CHECK(rot.residual == doctest::Approx(oracle::best_alignment_residual(rotated, phi)).epsilon(1e-12));

  CHECK_ERRC(identifiability_align(phi, Matrix::Zero(phi.rows(), 2)), Errc::ZeroColumn);
  CHECK_ERRC(identifiability_align(phi, Matrix::Ones(phi.rows(), 3)), Errc::ShapeMismatch);
}

TEST_CASE("alignment round trip for random permutations and scalings") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 5;
    const Matrix g = oracle::uniform(30, k, rng);
    std::vector<int> perm(static_cast<size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Matrix s = oracle::uniform(1, k, rng, 0.5, 3.0);
    Matrix f(30, k);
    for (int j = 0; j < k; ++j) f.col(j) = s(0, j) * g.col(perm[static_cast<size_t>(j)]);
    const auto r = identifiability_align(f, g);
    CHECK(r.residual < 1e-12);
    CHECK(r.permutation == perm);
    for (int j = 0; j < k; ++j) CHECK(r.scale(j) == doctest::Approx(s(0, j)).epsilon(1e-12));
    // A generic perturbation breaks the exact relation.
    const Matrix noisy = f + 0.1 * oracle::uniform(30, k, rng);
    CHECK(identifiability_align(noisy, g).residual > 1e-6);
  }
}

TEST_CASE("assignment solver matches brute force") {
  std::mt19937_64 rng(6);
  for (int n = 1; n <= 7; ++n)
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix c = oracle::uniform(n, n, rng);
      const auto a = solve_assignment(c);
      std::vector<int> sorted = a;
      std::sort(sorted.begin(), sorted.end());
      for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);
      double cost = 0.0;
      for (int r = 0; r < n; ++r) cost += c(r, a[static_cast<size_t>(r)]);
      CHECK(cost == doctest::Approx(oracle::best_assignment_cost(c)).epsilon(1e-12));
    }
}

TEST_CASE("rotation examples") {
  const auto model = fixture::random(3, 15, 2);
  const Matrix a = cooccurrence(model).raw;
  std::mt19937_64 rng(9);
  const Matrix f = oracle::gaussian(15, 4, rng);
  auto loss = [&](const Matrix& x) { return spectral_loss_population(x, a, model.marginal(), false).loss; };
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix r = random_rotation(4, seed);
    CHECK((r.transpose() * r - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0));
    CHECK(rotation_symmetry_check(f, r, loss).loss_delta < 1e-10);
  }
  CHECK(random_rotation(4, 1) == random_rotation(4, 1));

  const auto two = fixture::one_hot(2, 6);
  const auto quarter = rotation_symmetry_check(phi_of(two), planar_rotation(2, 0, 1, std::acos(-1.0) / 4.0),
                                              [](const Matrix&) { return 0.0; });
  CHECK(quarter.min_entry == doctest::Approx(-1.0).epsilon(1e-12));

  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  CHECK(is_permutation_like(swap));
  CHECK_FALSE(is_permutation_like(planar_rotation(2, 0, 1, 0.3)));
  const Matrix nonneg = oracle::uniform(6, 2, rng);
  CHECK(rotation_symmetry_check(nonneg, swap, [](const Matrix&) { return 0.0; }).min_entry >= 0.0);
}

TEST_CASE("rotation keeps similarity metrics but breaks sparsity, consistency and EA") {
  const auto model = fixture::one_hot(2, 12);
  const Matrix phi = phi_of(model);
  const Matrix rotated = phi * planar_rotation(2, 0, 1, std::acos(-1.0) / 4.0);
  const auto labels = class_labels(model);
  const Matrix a = cooccurrence(model).raw;
  CHECK(std::abs(retrieval_map(rotated, labels).map - retrieval_map(phi, labels).map) < 1e-10);
  CHECK(std::abs(oracle::spectral_loss(rotated, a, model.marginal()) - oracle::spectral_loss(phi, a, model.marginal())) <
        1e-10);
  CHECK(sparsity(rotated).mean < sparsity(phi).mean);
  CHECK(class_consistency(rotated, labels).mean < class_consistency(phi, labels).mean);
  const Vector w = model.marginal();
  const Vector ea_phi = expected_activation(phi, &w).values, ea_rot = expected_activation(rotated, &w).values;
  CHECK((ea_phi - ea_rot).cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("eigen spectrum and activation histogram") {
  const auto model = fixture::one_hot(3, 15);
  const Vector ev = eigen_spectrum(phi_of(model, 5), model.marginal());
  REQUIRE(ev.size() == 5);
  for (int i = 0; i < 3; ++i) CHECK(ev(i) == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 3; i < 5; ++i) CHECK(std::abs(ev(i)) < 1e-12);
  CHECK(eigen_spectrum(Matrix::Zero(15, 3), model.marginal()).isZero(0.0));

  const auto h = activated_dim_histogram(phi_of(model));
  for (int c : h.per_sample) CHECK(c == 1);
  CHECK(h.counts[1] == 15);
}

TEST_CASE("probe and Bayes agreement") {
  const auto model = fixture::one_hot(3, 30);
  const LabelMap coarse({0, 0, 1}, 2);
  const Matrix phi = phi_of(model);
  const auto y = bayes_labels(model, coarse);
  const auto pr = linear_probe(phi, y, phi, y);
  CHECK(pr.train_accuracy == 1.0);
  CHECK(pr.test_accuracy == 1.0);

  CHECK(bayes_agreement(bayes_classifier_weights(model, coarse, identity_permutation(3)), phi, model, coarse) == 1.0);
  for (double eps : {0.0, 0.02, 0.05}) {
    const auto ov = fixture::overlap(eps);
    const LabelMap id = LabelMap::identity(3);
    CHECK(bayes_agreement(bayes_classifier_weights(ov, id, identity_permutation(3)), phi_of(ov), ov, id) == 1.0);
  }

  std::vector<int> balanced{0, 1, 0, 1, 0, 1, 0, 1};
  const auto zero = linear_probe(Matrix::Zero(8, 2), balanced, Matrix::Zero(8, 2), balanced);
  CHECK(zero.test_accuracy == doctest::Approx(0.5));
  CHECK_ERRC(linear_probe(phi, std::vector<int>(30, 1), phi, y), Errc::DegenerateLabels);

  Vector v(3);
  v << 1.0, 1.0 + 1e-13, 0.5;
  CHECK(argmax_with_ties(v) == 0);
}

TEST_CASE("orthogonality bound on overlap models") {
  for (double eps : {0.0, 0.01, 0.05, 0.07}) {
    const auto model = fixture::overlap(eps);
    CHECK(class_overlap(model) == doctest::Approx(eps).epsilon(1e-9));
    const double bound = eps / model.min_class_prior();
    CHECK(weighted_cross_moment(phi_of(model), model.marginal()) <= bound + 1e-9);
  }
}

TEST_CASE("SEPIN: constant and duplicated dimensions carry no extra information") {
  const auto model = four_points();
  Matrix f(4, 4);
  f << 0, 0, 1, 0,  //
      1, 0, 1, 0,   //
      0, 1, 1, 1,   //
      1, 1, 1, 1;
  // dims: bit0, bit1, constant, duplicate of bit1
  const auto r = sepin_at_k(f, model, sepin_cfg());
  CHECK(std::abs(r.per_dim[2]) <= 3.0 * r.per_dim_stderr[2] + 1e-15);
  CHECK(r.per_dim[2] == 0.0);
  CHECK(std::abs(r.per_dim[1]) <= 3.0 * r.per_dim_stderr[1] + 1e-12);
  CHECK(std::abs(r.per_dim[3]) <= 3.0 * r.per_dim_stderr[3] + 1e-12);
  CHECK(r.per_dim[0] - r.per_dim[2] > 3.0 * r.per_dim_stderr[0]);
}

TEST_CASE("SEPIN: informative independent dimensions beat a constant control") {
  const auto model = four_points();
  Matrix f(4, 3);
  f << 0, 0, 1,  //
      1, 0, 1,   //
      0, 1, 1,   //
      1, 1, 1;
  SepinConfig cfg = sepin_cfg();
  const auto r = sepin_at_k(f, model, cfg);
  CHECK(r.order.back() == 2);
  CHECK(r.score - r.per_dim[2] > 3.0 * r.score_stderr);
  CHECK(r.per_dim[0] - r.per_dim[2] > 3.0 * r.per_dim_stderr[0]);
  CHECK(r.per_dim[1] - r.per_dim[2] > 3.0 * r.per_dim_stderr[1]);

  // Estimates stay below the exact mutual information of the feature patterns.
  const Matrix a = cooccurrence(model).raw;
  CHECK(r.full <= oracle::pattern_mutual_information(f, a) + 3.0 * r.full_stderr);
  for (int i = 0; i < 3; ++i) {
    Matrix drop(4, 2);
    int c = 0;
    for (int j = 0; j < 3; ++j)
      if (j != i) drop.col(c++) = f.col(j);
    CHECK(r.without[static_cast<size_t>(i)] <=
          oracle::pattern_mutual_information(drop, a) + 3.0 * r.without_stderr[static_cast<size_t>(i)]);
  }

  cfg.batches = 1;
  CHECK_ERRC(sepin_at_k(f, model, cfg), Errc::InsufficientDraws);
}

TEST_CASE("SEPIN stays below the enumerated information on random models") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto model = fixture::random(3, 12, 40 + seed);
    std::mt19937_64 rng(seed);
    Matrix f = oracle::uniform(12, 3, rng);
    for (int i = 0; i < f.size(); ++i) f.data()[i] = std::round(2.0 * f.data()[i]) / 2.0;
    SepinConfig cfg = sepin_cfg();
    cfg.seed = seed;
    const auto r = sepin_at_k(f, model, cfg);
    CHECK(r.full <= oracle::pattern_mutual_information(f, cooccurrence(model).raw) + 3.0 * r.full_stderr);
  }
}

TEST_CASE("pattern entropy matches the oracle") {
  const auto model = fixture::random(3, 10, 1);
  Matrix f(10, 2);
  for (int x = 0; x < 10; ++x) {
    f(x, 0) = x % 2;
    f(x, 1) = x % 3;
  }
  CHECK(pattern_entropy(f, model.marginal()) == doctest::Approx(oracle::row_pattern_entropy(f, model.marginal())));
}

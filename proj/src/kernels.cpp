#include "ncl/kernels.hpp"

#include <omp.h>

namespace ncl::kernels {

using Index = Eigen::Index;

namespace {

// Row-order serial reduction of per-row partials.
double ordered_sum(const Vector& partial) {
  double total = 0.0;
  for (Index i = 0; i < partial.size(); ++i) total += partial[i];
  return total;
}

// out = W * R, computed row by row.
void rowwise_product(const Matrix& weights, const Matrix& rhs, Matrix& out) {
  const Index rows = weights.rows();
  const Index inner = weights.cols();
  const Index k = rhs.cols();
  out.setZero(rows, k);
  const Matrix rhs_t = rhs.transpose();
#pragma omp parallel for schedule(static)
  for (Index a = 0; a < rows; ++a) {
    Vector acc = Vector::Zero(k);
    for (Index b = 0; b < inner; ++b) acc.noalias() += weights(a, b) * rhs_t.col(b);
    out.row(a) = acc.transpose();
  }
}

Matrix inner_products(const Matrix& left, const Matrix& right) {
  const Matrix lt = left.transpose();
  const Matrix rt = right.transpose();
  Matrix s(left.rows(), right.rows());
#pragma omp parallel for schedule(static)
  for (Index a = 0; a < left.rows(); ++a) {
    for (Index b = 0; b < right.rows(); ++b) s(a, b) = lt.col(a).dot(rt.col(b));
  }
  return s;
}

}  // namespace

namespace parallel {

Matrix cooccurrence(const Vector& prior, const Matrix& conditional) {
  const Index m = conditional.rows();
  const Index n = conditional.cols();
  Matrix a(n, n);
  // Upper triangle, mirrored: raw must be exactly symmetric.
#pragma omp parallel for schedule(dynamic, 4)
  for (Index x = 0; x < n; ++x) {
    for (Index y = x; y < n; ++y) {
      double acc = 0.0;
      for (Index c = 0; c < m; ++c) acc += prior[c] * (conditional(c, x) * conditional(c, y));
      a(x, y) = acc;
      a(y, x) = acc;
    }
  }
  return a;
}

Matrix cross_cooccurrence(const Vector& prior, const Matrix& cond_left, const Matrix& cond_right) {
  const Index m = cond_left.rows();
  Matrix a(cond_left.cols(), cond_right.cols());
#pragma omp parallel for schedule(static)
  for (Index v = 0; v < cond_left.cols(); ++v) {
    for (Index l = 0; l < cond_right.cols(); ++l) {
      double acc = 0.0;
      for (Index c = 0; c < m; ++c) acc += prior[c] * (cond_left(c, v) * cond_right(c, l));
      a(v, l) = acc;
    }
  }
  return a;
}

BilinearTerms bilinear_spectral(const Matrix& left, const Matrix& right, const Matrix& joint,
                                const Vector& p_left, const Vector& p_right, bool with_grad) {
  const Index na = left.rows();
  const Index nb = right.rows();
  const Matrix s = inner_products(left, right);

  Vector align_part(na), unif_part(na);
  Matrix w;
  if (with_grad) w.resize(na, nb);
#pragma omp parallel for schedule(static)
  for (Index a = 0; a < na; ++a) {
    double al = 0.0, un = 0.0;
    for (Index b = 0; b < nb; ++b) {
      const double sab = s(a, b);
      al += joint(a, b) * sab;
      un += p_right[b] * sab * sab;
      if (with_grad) w(a, b) = -2.0 * joint(a, b) + 2.0 * p_left[a] * p_right[b] * sab;
    }
    align_part[a] = al;
    unif_part[a] = p_left[a] * un;
  }

  BilinearTerms out;
  out.alignment = -2.0 * ordered_sum(align_part);
  out.uniformity = ordered_sum(unif_part);
  if (with_grad) {
    rowwise_product(w, right, out.grad_left);
    const Matrix wt = w.transpose();
    rowwise_product(wt, left, out.grad_right);
  }
  return out;
}

ResidualTerms factor_residual(const Matrix& target, const Matrix& left, const Matrix& right,
                              bool with_grad) {
  const Index na = left.rows();
  const Index nb = right.rows();
  Matrix e = inner_products(left, right);
  Vector part(na);
#pragma omp parallel for schedule(static)
  for (Index a = 0; a < na; ++a) {
    double acc = 0.0;
    for (Index b = 0; b < nb; ++b) {
      e(a, b) -= target(a, b);
      acc += e(a, b) * e(a, b);
    }
    part[a] = acc;
  }

  ResidualTerms out;
  out.residual = ordered_sum(part);
  if (with_grad) {
    rowwise_product(e, right, out.grad_left);
    out.grad_left *= 2.0;
    const Matrix et = e.transpose();
    rowwise_product(et, left, out.grad_right);
    out.grad_right *= 2.0;
  }
  return out;
}

}  // namespace parallel

namespace reference {

Matrix cooccurrence(const Vector& prior, const Matrix& conditional) {
  return cross_cooccurrence(prior, conditional, conditional);
}

Matrix cross_cooccurrence(const Vector& prior, const Matrix& cond_left, const Matrix& cond_right) {
  Matrix a = Matrix::Zero(cond_left.cols(), cond_right.cols());
  for (Index c = 0; c < prior.size(); ++c)
    for (Index v = 0; v < cond_left.cols(); ++v)
      for (Index l = 0; l < cond_right.cols(); ++l)
        a(v, l) += prior[c] * (cond_left(c, v) * cond_right(c, l));
  return a;
}

BilinearTerms bilinear_spectral(const Matrix& left, const Matrix& right, const Matrix& joint,
                                const Vector& p_left, const Vector& p_right, bool with_grad) {
  const Index na = left.rows(), nb = right.rows(), k = left.cols();
  BilinearTerms out;
  if (with_grad) {
    out.grad_left = Matrix::Zero(na, k);
    out.grad_right = Matrix::Zero(nb, k);
  }
  for (Index a = 0; a < na; ++a) {
    for (Index b = 0; b < nb; ++b) {
      double sab = 0.0;
      for (Index j = 0; j < k; ++j) sab += left(a, j) * right(b, j);
      const double pq = p_left[a] * p_right[b];
      out.alignment += -2.0 * joint(a, b) * sab;
      out.uniformity += pq * sab * sab;
      if (with_grad) {
        const double coef = -2.0 * joint(a, b) + 2.0 * pq * sab;
        for (Index j = 0; j < k; ++j) {
          out.grad_left(a, j) += coef * right(b, j);
          out.grad_right(b, j) += coef * left(a, j);
        }
      }
    }
  }
  return out;
}

ResidualTerms factor_residual(const Matrix& target, const Matrix& left, const Matrix& right,
                              bool with_grad) {
  const Index na = left.rows(), nb = right.rows(), k = left.cols();
  ResidualTerms out;
  if (with_grad) {
    out.grad_left = Matrix::Zero(na, k);
    out.grad_right = Matrix::Zero(nb, k);
  }
  for (Index a = 0; a < na; ++a) {
    for (Index b = 0; b < nb; ++b) {
      double sab = 0.0;
      for (Index j = 0; j < k; ++j) sab += left(a, j) * right(b, j);
      const double e = sab - target(a, b);
      out.residual += e * e;
      if (with_grad) {
        for (Index j = 0; j < k; ++j) {
          out.grad_left(a, j) += 2.0 * e * right(b, j);
          out.grad_right(b, j) += 2.0 * e * left(a, j);
        }
      }
    }
  }
  return out;
}

}  // namespace reference

void set_num_threads(int n) {
  static const int default_threads = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : default_threads);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace ncl::kernels

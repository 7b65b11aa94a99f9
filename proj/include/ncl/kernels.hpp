#pragma once

// Population-exact O(N^2 k) kernels behind the objectives.
//
// Two implementations share one signature: `parallel` (OpenMP over rows) is
// what the library calls, `reference` is a direct triple-loop transcription
// kept for tests and the benchmark. The parallel kernels write per-row
// partial sums and reduce them serially in row order, so results do not
// depend on the thread count.

#include "ncl/types.hpp"

namespace ncl::kernels {

/// Terms of  -2 sum_ab J[a,b] <l_a, r_b>  +  sum_ab p_a q_b <l_a, r_b>^2.
struct BilinearTerms {
  double alignment = 0.0;
  double uniformity = 0.0;
  Matrix grad_left;   // empty unless requested
  Matrix grad_right;  // empty unless requested
};

/// || T - L R^T ||_F^2 and its gradients 2(LR^T - T)R, 2(LR^T - T)^T L.
struct ResidualTerms {
  double residual = 0.0;
  Matrix grad_left;
  Matrix grad_right;
};

namespace parallel {

/// A[x,x'] = sum_c prior_c cond(c,x) cond(c,x'), conditional is m x N.
Matrix cooccurrence(const Vector& prior, const Matrix& conditional);
/// A[v,l] = sum_c prior_c cv(c,v) cl(c,l).
Matrix cross_cooccurrence(const Vector& prior, const Matrix& cond_left, const Matrix& cond_right);

BilinearTerms bilinear_spectral(const Matrix& left, const Matrix& right, const Matrix& joint,
                                const Vector& p_left, const Vector& p_right, bool with_grad);

ResidualTerms factor_residual(const Matrix& target, const Matrix& left, const Matrix& right,
                              bool with_grad);

}  // namespace parallel

namespace reference {

Matrix cooccurrence(const Vector& prior, const Matrix& conditional);
Matrix cross_cooccurrence(const Vector& prior, const Matrix& cond_left, const Matrix& cond_right);

BilinearTerms bilinear_spectral(const Matrix& left, const Matrix& right, const Matrix& joint,
                                const Vector& p_left, const Vector& p_right, bool with_grad);

ResidualTerms factor_residual(const Matrix& target, const Matrix& left, const Matrix& right,
                              bool with_grad);

}  // namespace reference

/// Thread count used by the parallel kernels (0 restores the OpenMP default).
void set_num_threads(int n);
int max_threads();

}  // namespace ncl::kernels

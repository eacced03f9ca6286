"""
Dense Cholesky against sparse LDL'
==================================

The interior point method spends its time factoring a KKT matrix. When the
covariance is sparse a fill-reducing ordering plus a sparse LDL' keeps the
factor small. This compares a dense LAPACK Cholesky with the sparse
refactorization on a much larger but very sparse matrix.
"""
import numpy as np
import scipy.sparse as sp

from pods.qp.factor import analyze, bench_factorization, factorize

rep = bench_factorization(n_dense=800, n_sparse=5000, sparsity=0.99, reps=10)
print(f"dense  n={rep.n_dense:5d}: {1e3 * rep.dense_mean:7.2f} ms")
print(f"sparse n={rep.n_sparse:5d}: {1e3 * rep.sparse_mean:7.2f} ms  "
      f"(matrix nnz {rep.sparse_nnz}, factor nnz {rep.factor_nnz})")

# %%
# The factor solves indefinite systems too and reports their inertia.
A = sp.csc_matrix(np.array([[4.0, 1.0, 1.0], [1.0, 3.0, 1.0], [1.0, 1.0, 0.0]]))
F = factorize(A, analyze(A))
x = F.solve(np.array([1.0, 2.0, 3.0]))
print("solution", x, "residual", np.abs(A @ x - [1, 2, 3]).max())
print("inertia (positive, negative):", F.inertia())

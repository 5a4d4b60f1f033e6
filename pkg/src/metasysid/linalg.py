"""Dense linear-algebra primitives used throughout the package.

Everything here is a pure function of its inputs. Matrices are plain
``numpy.float64`` arrays; complex arithmetic stays internal to
:func:`spectral_radius` and :func:`hinf_resolvent_norm`.
"""

from __future__ import annotations

import numpy as np

from .errors import InstabilityError, NumericalError

_EPS = float(np.finfo(np.float64).eps)

# Dimension limit below which the discrete Lyapunov equation is solved
# exactly through its Kronecker-product linear system.
_DLYAP_KRON_LIMIT = 10
_DLYAP_SERIES_TERMS = 200

_DARE_TOL = 1e-12
_DARE_MAX_ITER = 100_000


def _as_matrix(mat, name: str) -> np.ndarray:
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _as_square(mat, name: str) -> np.ndarray:
    arr = _as_matrix(mat, name)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    return arr


def pinv(mat, rcond: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values at or below ``rcond * sigma_max`` are treated as zero.
    ``rcond`` defaults to ``max(rows, cols) * machine_epsilon``.
    """
    arr = _as_matrix(mat, "mat")
    if rcond is None:
        rcond = max(arr.shape) * _EPS
    if rcond < 0:
        raise ValueError(f"rcond must be >= 0, got {rcond}")
    try:
        u, s, vt = np.linalg.svd(arr, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge for a {arr.shape[0]} x {arr.shape[1]} matrix"
        ) from exc
    cutoff = rcond * (s[0] if s.size else 0.0)
    inv = np.where(s > cutoff, np.divide(1.0, s, where=s > 0), 0.0)
    return (vt.T * inv) @ u.T


def min_eig_sym(mat, tol: float = 1e-10) -> float:
    """Smallest eigenvalue of a symmetric matrix.

    The input must be symmetric up to ``tol`` relative to its largest
    entry magnitude; anything worse is treated as a contract violation.
    """
    arr = _as_square(mat, "mat")
    scale = max(1.0, float(np.max(np.abs(arr))))
    asym = float(np.max(np.abs(arr - arr.T)))
    if asym > tol * scale:
        raise ValueError(
            f"matrix is not symmetric: max asymmetry {asym:.3e} exceeds "
            f"{tol:.1e} * {scale:.3e}"
        )
    sym = 0.5 * (arr + arr.T)
    return float(np.linalg.eigvalsh(sym)[0])


def spectral_radius(mat) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    arr = _as_square(mat, "mat")
    return float(np.max(np.abs(np.linalg.eigvals(arr))))


def spectral_norm(mat) -> float:
    """Largest singular value."""
    arr = _as_matrix(mat, "mat")
    return float(np.linalg.norm(arr, 2))


def solve_dlyap(a, q) -> np.ndarray:
    """Solve the discrete Lyapunov equation ``P = A P A^T + Q``.

    Parameters
    ----------
    a : array_like
        Square matrix with spectral radius < 1.
    q : array_like
        Symmetric positive-semidefinite right-hand side.

    Returns
    -------
    numpy.ndarray
        The unique solution, symmetrized. Dimensions up to
        ``_DLYAP_KRON_LIMIT`` use the exact Kronecker linear solve, larger
        ones a truncated series.
    """
    a_arr = _as_square(a, "a")
    q_arr = _as_square(q, "q")
    if a_arr.shape != q_arr.shape:
        raise ValueError(f"shape mismatch: a is {a_arr.shape}, q is {q_arr.shape}")
    rho = spectral_radius(a_arr)
    if rho >= 1.0:
        raise InstabilityError(
            f"cannot solve Lyapunov equation: spectral radius {rho:.6g} >= 1"
        )
    n = a_arr.shape[0]
    if n <= _DLYAP_KRON_LIMIT:
        lhs = np.eye(n * n) - np.kron(a_arr, a_arr)
        vec = np.linalg.solve(lhs, q_arr.flatten(order="F"))
        p = vec.reshape((n, n), order="F")
    else:
        p = np.zeros_like(q_arr)
        term = q_arr.copy()
        for _ in range(_DLYAP_SERIES_TERMS):
            p += term
            term = a_arr @ term @ a_arr.T
    p = 0.5 * (p + p.T)
    residual = float(np.linalg.norm(a_arr @ p @ a_arr.T - p + q_arr))
    if residual >= 1e-10 * (1.0 + float(np.linalg.norm(p))):
        raise NumericalError(
            f"Lyapunov solve residual {residual:.3e} exceeds tolerance"
        )
    return p


def solve_dare(a, b, s, r) -> np.ndarray:
    """Solve the discrete algebraic Riccati equation by value iteration.

    Finds ``P = A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A + S`` starting
    from ``P = S``, stopping once successive iterates differ by less than
    an absolute ``1e-12`` in Frobenius norm.
    """
    a_arr = _as_square(a, "a")
    b_arr = _as_matrix(b, "b")
    s_arr = _as_square(s, "s")
    r_arr = _as_square(r, "r")
    n = a_arr.shape[0]
    m = b_arr.shape[1]
    if b_arr.shape[0] != n:
        raise ValueError(f"b must have {n} rows, got {b_arr.shape[0]}")
    if s_arr.shape[0] != n or r_arr.shape[0] != m:
        raise ValueError("cost matrices do not match the system dimensions")
    if min_eig_sym(s_arr) <= 0 or min_eig_sym(r_arr) <= 0:
        raise ValueError("s and r must be symmetric positive definite")

    p = s_arr.copy()
    residual = np.inf
    for _ in range(_DARE_MAX_ITER):
        bpb = r_arr + b_arr.T @ p @ b_arr
        try:
            gain_term = np.linalg.solve(bpb, b_arr.T @ p @ a_arr)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("Riccati iteration hit a singular input-cost term") from exc
        p_next = a_arr.T @ p @ a_arr - (a_arr.T @ p @ b_arr) @ gain_term + s_arr
        p_next = 0.5 * (p_next + p_next.T)
        residual = float(np.linalg.norm(p_next - p))
        p = p_next
        if not np.isfinite(residual):
            raise NumericalError(
                "Riccati value iteration diverged (is the pair stabilizable?)"
            )
        if residual <= _DARE_TOL:
            return p
    raise NumericalError(
        f"Riccati value iteration did not converge within {_DARE_MAX_ITER} "
        f"iterations; last residual {residual:.3e}"
    )


def hinf_resolvent_norm(a, grid_points: int = 1024) -> float:
    """Peak resolvent gain ``max_theta sigma_max((e^{i theta} I - A)^{-1})``.

    Evaluated on a uniform grid of the unit circle, so the value is a
    lower-bound approximation of the true supremum that tightens with
    ``grid_points``.
    """
    a_arr = _as_square(a, "a")
    if grid_points < 64:
        raise ValueError(f"grid_points must be >= 64, got {grid_points}")
    rho = spectral_radius(a_arr)
    if rho >= 1.0:
        raise InstabilityError(
            f"resolvent norm needs spectral radius < 1, got {rho:.6g}"
        )
    n = a_arr.shape[0]
    eye = np.eye(n)
    best = 0.0
    for theta in 2.0 * np.pi * np.arange(grid_points) / grid_points:
        point = np.exp(1j * theta)
        resolvent = np.linalg.inv(point * eye - a_arr)
        best = max(best, float(np.linalg.norm(resolvent, 2)))
    return best

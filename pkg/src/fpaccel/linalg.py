"""Dense kernels: Gram-Schmidt, evolving QR factors and their downdates.

The factorizations here track a tall matrix ``F`` whose columns arrive one
at a time and leave oldest first, which is exactly the access pattern of a
sliding least-squares window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import linalg as sla

from .errors import NearBreakdown, SingularSystem

BREAKDOWN_TOL = 1e-14
REORTH_RATIO = 1.0 / math.sqrt(2.0)


def mgs(V: NDArray, v: NDArray, *, reorth: bool = True) -> tuple[NDArray, NDArray]:
    """Orthogonalize ``v`` against the orthonormal columns of ``V``.

    Modified Gram-Schmidt with a second pass when more than ``1 - 1/sqrt(2)``
    of the norm was removed. Returns the orthogonal remainder and the
    accumulated coefficients, so that ``v = V @ h + w``.
    """
    w = np.array(v, dtype=float, copy=True)
    k = V.shape[1] if V.ndim == 2 else 0
    h = np.zeros(k)
    if k == 0:
        return w, h
    nv = np.linalg.norm(w)
    for _ in range(2 if reorth else 1):
        for i in range(k):
            c = V[:, i] @ w
            w -= c * V[:, i]
            h[i] += c
        if np.linalg.norm(w) > REORTH_RATIO * nv:
            break
        nv = np.linalg.norm(w)
    return w, h


@dataclass
class QRFactors:
    """Thin factorization ``F = Q R`` with at most ``capacity`` columns.

    After a polar downdate ``R`` is no longer triangular; ``triangular``
    records which solver applies.
    """

    Q: NDArray
    R: NDArray
    capacity: int
    triangular: bool = True

    @classmethod
    def empty(cls, n: int, capacity: int) -> "QRFactors":
        return cls(np.zeros((n, 0)), np.zeros((0, 0)), capacity)

    @classmethod
    def from_columns(cls, F: NDArray, capacity: int | None = None) -> "QRFactors":
        F = np.atleast_2d(np.asarray(F, dtype=float))
        qr = cls.empty(F.shape[0], capacity or F.shape[1])
        for j in range(F.shape[1]):
            qr, _, _ = mgs_insert(qr, F[:, j])
        return qr

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def k(self) -> int:
        return self.Q.shape[1]

    def orthogonality_error(self) -> float:
        if self.k == 0:
            return 0.0
        return float(np.max(np.abs(self.Q.T @ self.Q - np.eye(self.k))))

    def matrix(self) -> NDArray:
        return self.Q @ self.R


@dataclass(frozen=True)
class DowndateFactors:
    """Scalars of the rank-one correction ``I + s s^T`` used after deletion.

    ``base`` is the block of the old factor that survives the deletion; it is
    kept so that the inverse of the non-triangular factor can be applied.
    """

    s: NDArray
    lam: float
    alpha: float
    beta: float
    base: NDArray | None = None

    def sqrt_matrix(self) -> NDArray:
        return np.eye(self.s.size) + self.alpha * np.outer(self.s, self.s)

    def inv_sqrt_matrix(self) -> NDArray:
        return np.eye(self.s.size) - self.beta * np.outer(self.s, self.s)

    def solve(self, rhs: NDArray) -> NDArray:
        """Apply ``S^{-1} = B^{-1} (I - beta s s^T)`` to ``rhs``."""
        if self.base is None:
            raise ValueError("no base block stored")
        t = rhs - self.beta * np.multiply.outer(self.s, self.s @ rhs)
        tri = not np.any(np.tril(self.base, -1))
        return _solve_square(self.base, t, triangular=tri)


def mgs_insert(qr: QRFactors, v: NDArray) -> tuple[QRFactors, NDArray, float]:
    """Append column ``v``; return new factors, coefficients and new diagonal."""
    if qr.k >= qr.capacity:
        raise ValueError("QR factors are at capacity")
    v = np.asarray(v, dtype=float)
    if v.shape != (qr.n,):
        raise ValueError(f"expected vector of length {qr.n}, got {v.shape}")
    nv = np.linalg.norm(v)
    w, h = mgs(qr.Q, v)
    rho = float(np.linalg.norm(w))
    if rho <= BREAKDOWN_TOL * nv or nv == 0.0:
        raise NearBreakdown(f"new column is dependent (residual {rho:.3e}, norm {nv:.3e})")
    k = qr.k
    Q = np.empty((qr.n, k + 1))
    Q[:, :k] = qr.Q
    Q[:, k] = w / rho
    R = np.zeros((k + 1, k + 1))
    R[:k, :k] = qr.R
    R[:k, k] = h
    R[k, k] = rho
    return QRFactors(Q, R, qr.capacity, qr.triangular), h, rho


def _fix_signs(Q: NDArray, R: NDArray) -> None:
    neg = np.diag(R) < 0
    R[neg, :] *= -1.0
    Q[:, neg] *= -1.0


def givens_downdate(qr: QRFactors) -> QRFactors:
    """Delete the first column of ``F`` by rotating ``R[:, 1:]`` back to triangular form."""
    k = qr.k
    if k < 2:
        raise ValueError("need at least two columns to downdate")
    if not qr.triangular:
        raise ValueError("Givens downdating needs a triangular factor")
    H = qr.R[:, 1:].copy()
    Q = qr.Q.copy()
    for i in range(k - 1):
        a, b = H[i, i], H[i + 1, i]
        r = math.hypot(a, b)
        if r == 0.0:
            raise NearBreakdown("zero column in Hessenberg factor")
        c, s = a / r, b / r
        rot = np.array([[c, s], [-s, c]])
        H[i : i + 2, i:] = rot @ H[i : i + 2, i:]
        H[i + 1, i] = 0.0
        Q[:, i : i + 2] = Q[:, i : i + 2] @ rot.T
    Q = Q[:, : k - 1].copy()
    R = np.triu(H[: k - 1, :])
    _fix_signs(Q, R)
    return QRFactors(Q, R, qr.capacity, True)


def _solve_square(B: NDArray, rhs: NDArray, *, triangular: bool, trans: bool = False) -> NDArray:
    d = np.abs(np.diag(B))
    if B.size and triangular and d.min() <= BREAKDOWN_TOL * d.max():
        raise NearBreakdown("triangular factor is numerically singular")
    if triangular:
        return sla.solve_triangular(B, rhs, lower=False, trans="T" if trans else "N")
    try:
        return np.linalg.solve(B.T if trans else B, rhs)
    except np.linalg.LinAlgError as exc:
        raise NearBreakdown(str(exc)) from exc


def _deletion_split(qr: QRFactors) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """Return ``q1, Q_minus, B, s`` with ``F[:, 1:] = (Q_minus + q1 s^T) B``."""
    if qr.k < 2:
        raise ValueError("need at least two columns to downdate")
    q1, Qm = qr.Q[:, 0], qr.Q[:, 1:]
    h1, B = qr.R[0, 1:], qr.R[1:, 1:]
    # s^T = h1^T B^{-1}, i.e. B^T s = h1
    s = _solve_square(B, h1, triangular=qr.triangular, trans=True)
    return q1, Qm, B, s


def rank_one_identity_cholesky(s: NDArray) -> NDArray:
    """Lower-triangular ``G`` with ``G G^T = I + s s^T`` in O(k^2) work.

    This is a Cholesky rank-one update applied to the identity.
    """
    k = s.size
    G = np.eye(k)
    x = np.array(s, dtype=float, copy=True)
    for j in range(k):
        gjj = G[j, j]
        r = math.hypot(gjj, x[j])
        c, sn = r / gjj, x[j] / gjj
        G[j, j] = r
        if j + 1 < k:
            G[j + 1 :, j] = (G[j + 1 :, j] + sn * x[j + 1 :]) / c
            x[j + 1 :] = c * x[j + 1 :] - sn * G[j + 1 :, j]
    return G


def cholesky_downdate(qr: QRFactors) -> QRFactors:
    q1, Qm, B, s = _deletion_split(qr)
    G = rank_one_identity_cholesky(s)
    Z = Qm + np.outer(q1, s)
    Q = sla.solve_triangular(G, Z.T, lower=True).T
    R = G.T @ B
    if qr.triangular:
        R = np.triu(R)
    return QRFactors(Q, R, qr.capacity, qr.triangular)


def fractional_identity_powers(s: NDArray) -> tuple[float, float]:
    """Coefficients with ``(I+ss^T)^{1/2} = I + alpha ss^T`` and ``(I+ss^T)^{-1/2} = I - beta ss^T``."""
    lam = 1.0 + float(np.dot(s, s))
    root = math.sqrt(lam)
    return 1.0 / (1.0 + root), 1.0 / (lam + root)


def polar_downdate(qr: QRFactors) -> tuple[NDArray, NDArray, DowndateFactors]:
    """Downdate with the symmetric square root of ``I + ss^T``.

    The new ``S`` is not triangular; its inverse is available through the
    returned :class:`DowndateFactors`.
    """
    q1, Qm, B, s = _deletion_split(qr)
    alpha, beta = fractional_identity_powers(s)
    Z = Qm + np.outer(q1, s)
    Q = Z - beta * np.outer(Z @ s, s)
    S = B + alpha * np.outer(s, s @ B)
    return Q, S, DowndateFactors(s, 1.0 + float(s @ s), alpha, beta, B)


def polar_downdate_factors(qr: QRFactors) -> QRFactors:
    Q, S, _ = polar_downdate(qr)
    return QRFactors(Q, S, qr.capacity, triangular=False)


def solve_regularized_normal(F: NDArray, rhs: NDArray, tau_reg: float = 0.0) -> NDArray:
    """Solve ``(F^T F + tau I) gamma = F^T rhs`` by Cholesky."""
    if tau_reg < 0:
        raise ValueError("tau_reg must be nonnegative")
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    M = F.T @ F + tau_reg * np.eye(F.shape[1])
    try:
        c, low = sla.cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("normal matrix is not positive definite") from exc
    piv = np.diag(c) ** 2
    scale = max(float(np.max(np.diag(M))), np.finfo(float).tiny)
    if piv.min() <= 10 * np.finfo(float).eps * F.shape[1] * scale:
        raise SingularSystem("normal matrix is numerically singular")
    return sla.cho_solve((c, low), F.T @ rhs)


def lstsq_qr(qr: QRFactors, rhs: NDArray) -> NDArray:
    """Least-squares coefficients ``R^{-1} Q^T rhs``."""
    if qr.k == 0:
        raise SingularSystem("empty factorization")
    eta = qr.Q.T @ rhs
    if qr.triangular:
        if np.any(np.diag(qr.R) == 0.0):
            raise SingularSystem("zero on the diagonal of R")
        return sla.solve_triangular(qr.R, eta, lower=False)
    try:
        return np.linalg.solve(qr.R, eta)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


class PairedDirections:
    """Coupled bases ``(P, V)`` with orthonormal ``V`` and at most ``capacity`` pairs.

    Every Gram-Schmidt coefficient applied to a new ``v`` is applied to its
    partner ``p`` as well, so a relation ``v_i = A p_i`` survives
    orthogonalization. The oldest pair is evicted first.
    """

    def __init__(
        self,
        n: int,
        capacity: int | None = None,
        tol: float = BREAKDOWN_TOL,
        *,
        evict_first: bool = False,
    ):
        self.n = n
        self.capacity = capacity
        self.tol = tol
        self.evict_first = evict_first
        self._P: list[NDArray] = []
        self._V: list[NDArray] = []

    def __len__(self) -> int:
        return len(self._V)

    @property
    def P(self) -> NDArray:
        return np.column_stack(self._P) if self._P else np.zeros((self.n, 0))

    @property
    def V(self) -> NDArray:
        return np.column_stack(self._V) if self._V else np.zeros((self.n, 0))

    def clear(self) -> None:
        self._P.clear()
        self._V.clear()

    def add(self, p: NDArray, v: NDArray) -> tuple[NDArray, float]:
        """Orthogonalize ``v`` against the live ``V``, normalize both and store.

        With ``evict_first`` a full basis drops its oldest pair before the
        new one is orthogonalized, otherwise afterwards. Returns the
        Gram-Schmidt coefficients and the norm used for scaling. Raises
        :class:`NearBreakdown` when ``v`` is dependent on ``V``.
        """
        if self.evict_first and self.capacity is not None and len(self) >= self.capacity:
            self._evict()
        nv = float(np.linalg.norm(v))
        w, h = mgs(self.V, v)
        p = np.array(p, dtype=float, copy=True)
        for i, c in enumerate(h):
            p -= c * self._P[i]
        rho = float(np.linalg.norm(w))
        if nv == 0.0 or rho <= self.tol * nv:
            raise NearBreakdown(f"direction pair is dependent (norm {rho:.3e})")
        self._P.append(p / rho)
        self._V.append(w / rho)
        if self.capacity is not None and len(self) > self.capacity:
            self._evict()
        return h, rho

    def _evict(self) -> None:
        self._P.pop(0)
        self._V.pop(0)

    def multisecant(self) -> NDArray:
        """Dense ``G = P V^T``; maps each live ``v_i`` to ``p_i``."""
        return self.P @ self.V.T


def multisecant_view(dirs: PairedDirections) -> NDArray:
    return dirs.multisecant()

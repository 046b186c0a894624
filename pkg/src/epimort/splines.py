"""Cubic and cyclic-cubic regression spline bases with curvature penalties.

Both bases are parameterized by the function values at the knots, so a
coefficient vector equal to the knot ordinates of a straight line reproduces
that line exactly (and a constant coefficient vector reproduces a constant).
Smoothness is controlled by the integrated squared second derivative penalty
``beta' S beta``, not by knot placement; knots are spaced evenly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

CUBIC = "cubic"
CYCLIC = "cyclic-cubic"

_MIN_K = {CUBIC: 4, CYCLIC: 3}


@dataclass(frozen=True)
class Penalty:
    """Symmetric positive semi-definite curvature penalty for one smooth."""

    S: np.ndarray
    rank: int
    null_dim: int

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ParameterError("penalty matrix must be square")
        scale = np.abs(S).max()
        if scale > 0 and np.abs(S - S.T).max() > 1e-12 * scale:
            raise ParameterError("penalty matrix must be symmetric")
        if self.rank + self.null_dim != S.shape[0]:
            raise ParameterError("rank + null_dim must equal the basis dimension")
        object.__setattr__(self, "S", 0.5 * (S + S.T))

    @property
    def dim(self) -> int:
        return self.S.shape[0]


def penalty_from_matrix(S: np.ndarray, eps: float = 1e-10) -> Penalty:
    """Build a Penalty with rank/null dimension measured by eigendecomposition."""
    S = 0.5 * (np.asarray(S, dtype=float) + np.asarray(S, dtype=float).T)
    ev = np.linalg.eigvalsh(S)
    top = ev[-1] if ev.size else 0.0
    if top <= 0:
        return Penalty(S, 0, S.shape[0])
    rank = int(np.sum(ev > eps * top))
    return Penalty(S, rank, S.shape[0] - rank)


class SplineBasis:
    """A regression spline basis parameterized by values at its knots.

    Parameters
    ----------
    kind : str
        ``"cubic"`` (natural boundary conditions, clamped linear
        extrapolation outside the knot range) or ``"cyclic-cubic"``
        (periodic: values and first/second derivatives match at the ends
        of the knot range; evaluation wraps modulo the period).
    knots : array
        Strictly increasing knot locations. For the cyclic basis the last
        knot is the wrap point and carries no coefficient of its own.
    """

    def __init__(self, kind: str, knots: np.ndarray):
        if kind not in (CUBIC, CYCLIC):
            raise ParameterError(f"unknown basis kind {kind!r}")
        knots = np.asarray(knots, dtype=float)
        if knots.ndim != 1 or knots.size < 2 or np.any(np.diff(knots) <= 0):
            raise ParameterError("knots must be a strictly increasing 1-d sequence")
        self.kind = kind
        self.knots = knots
        self.K = knots.size if kind == CUBIC else knots.size - 1
        if self.K < _MIN_K[kind]:
            raise ParameterError(
                f"{kind} basis needs at least {_MIN_K[kind]} functions, got {self.K}"
            )
        self._F = self._second_deriv_map()

    # -- construction ------------------------------------------------------

    def _second_deriv_map(self) -> np.ndarray:
        """Matrix mapping knot values to knot second derivatives."""
        x = self.knots
        h = np.diff(x)
        if self.kind == CUBIC:
            K = self.K
            B = np.zeros((K - 2, K - 2))
            D = np.zeros((K - 2, K))
            for i in range(K - 2):
                D[i, i] = 1.0 / h[i]
                D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
                D[i, i + 2] = 1.0 / h[i + 1]
                B[i, i] = (h[i] + h[i + 1]) / 3.0
                if i + 1 < K - 2:
                    B[i, i + 1] = B[i + 1, i] = h[i + 1] / 6.0
            F = np.zeros((K, K))
            F[1:-1] = np.linalg.solve(B, D)
            self._B, self._D = B, D
            return F
        # cyclic: K free values, knot K is identified with knot 0
        K = self.K
        B = np.zeros((K, K))
        D = np.zeros((K, K))
        for i in range(K):
            im, ip = (i - 1) % K, (i + 1) % K
            hm, hi = h[im], h[i]
            B[i, im] += hm / 6.0
            B[i, i] += (hm + hi) / 3.0
            B[i, ip] += hi / 6.0
            D[i, im] += 1.0 / hm
            D[i, i] += -1.0 / hm - 1.0 / hi
            D[i, ip] += 1.0 / hi
        self._B, self._D = B, D
        return np.linalg.solve(B, D)

    # -- evaluation --------------------------------------------------------

    @property
    def range(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def design(self, t: np.ndarray, deriv: int = 0) -> np.ndarray:
        """Evaluate the basis (or a derivative) at ``t``; rows are points.

        For the cubic basis, points outside the knot range use clamped
        linear extrapolation (constant first derivative, zero curvature).
        The cyclic basis wraps ``t`` modulo its period.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if deriv not in (0, 1, 2):
            raise ParameterError("deriv must be 0, 1 or 2")
        if self.kind == CYCLIC:
            lo, hi = self.range
            tt = lo + np.mod(t - lo, hi - lo)
            return self._design_inner(tt, deriv)
        lo, hi = self.range
        inside = np.clip(t, lo, hi)
        rows = self._design_inner(inside, deriv)
        outside = (t < lo) | (t > hi)
        if outside.any():
            if deriv == 0:
                for mask, edge in ((t < lo, lo), (t > hi, hi)):
                    if mask.any():
                        slope = self._design_inner(np.array([edge]), 1)[0]
                        rows[mask] += (t[mask] - edge)[:, None] * slope
            elif deriv == 2:
                rows[outside] = 0.0
            # deriv == 1: the clamped evaluation is already the boundary slope
        return rows

    def _design_inner(self, t: np.ndarray, deriv: int) -> np.ndarray:
        x, K = self.knots, self.K
        h = np.diff(x)
        j = np.clip(np.searchsorted(x, t, side="right") - 1, 0, x.size - 2)
        hj = h[j]
        left, right = t - x[j], x[j + 1] - t
        rows = np.zeros((t.size, K))
        if deriv == 0:
            am, ap = right / hj, left / hj
            cm = (right**3 / hj - hj * right) / 6.0
            cp = (left**3 / hj - hj * left) / 6.0
        elif deriv == 1:
            am, ap = -1.0 / hj, 1.0 / hj
            cm = (-3.0 * right**2 / hj + hj) / 6.0
            cp = (3.0 * left**2 / hj - hj) / 6.0
        else:
            am = ap = np.zeros_like(hj)
            cm, cp = right / hj, left / hj
        jl = j % K if self.kind == CYCLIC else j
        jr = (j + 1) % K if self.kind == CYCLIC else np.minimum(j + 1, K - 1)
        idx = np.arange(t.size)
        rows[idx, jl] += am
        rows[idx, jr] += ap
        rows += cm[:, None] * self._F[jl]
        rows += cp[:, None] * self._F[jr]
        return rows

    # -- penalty -----------------------------------------------------------

    def penalty(self) -> Penalty:
        """Integrated squared second derivative penalty over the knot range."""
        BinvD = np.linalg.solve(self._B, self._D)
        S = self._D.T @ BinvD
        S = 0.5 * (S + S.T)
        if self.kind == CUBIC:
            return Penalty(S, self.K - 2, 2)
        return Penalty(S, self.K - 1, 1)


def build_basis(kind: str, knot_range: tuple[float, float], K: int) -> SplineBasis:
    """Evenly spaced spline basis of dimension ``K`` over ``knot_range``."""
    lo, hi = float(knot_range[0]), float(knot_range[1])
    if not hi > lo:
        raise ParameterError("knot_range must be a nonempty interval")
    if kind == CUBIC:
        knots = np.linspace(lo, hi, K)
    elif kind == CYCLIC:
        knots = np.linspace(lo, hi, K + 1)
    else:
        raise ParameterError(f"unknown basis kind {kind!r}")
    return SplineBasis(kind, knots)

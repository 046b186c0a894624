"""Penalized likelihood estimation with marginal-likelihood smoothing selection.

The entry point is :func:`fit_penalized`, which alternates a safeguarded
penalized Newton optimization of the coefficients with multiplicative updates
of the smoothing parameters, until the smoothing parameters stop moving.
Smoothing parameters maximize a Laplace approximation to the marginal
likelihood of the model under improper Gaussian smoothing priors; for a
Gaussian likelihood the approximation is exact.

The likelihood is supplied as a callable ``beta -> (value, gradient, hessian)``
so the same machinery drives Gaussian, count-data and heavy-tailed models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InputError, NumericalError
from .splines import Penalty

LAMBDA_MIN = 1e-8
LAMBDA_MAX = 1e12
_EIG_EPS = 1e-10  # relative threshold for penalty pseudo-inverses


@dataclass
class PenaltyBlock:
    """One penalty acting on a contiguous slice of the coefficient vector."""

    penalty: Penalty
    offset: int
    label: str = ""

    @property
    def dim(self) -> int:
        return self.penalty.dim

    def embed(self, p: int) -> np.ndarray:
        """Zero-padded copy of the penalty in the full coefficient space."""
        S = np.zeros((p, p))
        k = self.dim
        S[self.offset : self.offset + k, self.offset : self.offset + k] = self.penalty.S
        return S


@dataclass
class NewtonResult:
    beta: np.ndarray
    V: np.ndarray            # (penalized negative Hessian)^-1 at the optimum
    hess_ll: np.ndarray      # Hessian of the unpenalized log likelihood
    loglik: float
    penalized: float
    grad_norm: float
    iterations: int
    converged: bool


@dataclass
class PenalizedFit:
    """Converged penalized fit with smoothing parameters selected."""

    beta_hat: np.ndarray
    V_beta: np.ndarray
    lambdas: np.ndarray
    log_marginal: float
    converged: bool
    iterations: int           # outer smoothing-parameter iterations
    loglik: float
    edf: float
    penalties: list[PenaltyBlock] = field(default_factory=list)
    lambda_flags: list[str] = field(default_factory=list)
    hess_ll: np.ndarray | None = None
    inner_iterations: int = 0

    def covariance(self) -> np.ndarray:
        return self.V_beta


def _repair_negdef(A: np.ndarray, floor_rel: float = 1e-8) -> np.ndarray:
    """Force symmetric ``A`` positive definite by flooring its eigenvalues."""
    A = 0.5 * (A + A.T)
    try:
        np.linalg.cholesky(A)
        return A
    except np.linalg.LinAlgError:
        pass
    w, Q = np.linalg.eigh(A)
    floor = floor_rel * max(np.abs(w).max(), 1.0)
    w = np.maximum(w, floor)
    return (Q * w) @ Q.T


def penalized_newton(
    loglik,
    penalties: list[PenaltyBlock],
    lambdas: np.ndarray,
    beta0: np.ndarray,
    *,
    max_iter: int = 200,
    grad_tol: float = 1e-6,
) -> NewtonResult:
    """Maximize ``loglik(beta) - 0.5 * sum_j lambda_j beta' S_j beta``.

    Newton steps use the penalized Hessian, repaired to negative definite by
    eigenvalue flooring when indefinite; step halving enforces a monotone
    increase of the penalized objective. Convergence is declared when the
    max-norm of the penalized gradient falls below ``grad_tol`` relative to
    its starting value (with an absolute floor of 1).
    """
    beta = np.array(beta0, dtype=float)
    p = beta.size
    lambdas = np.asarray(lambdas, dtype=float)
    S_lam = np.zeros((p, p))
    for lam, blk in zip(lambdas, penalties):
        S_lam += lam * blk.embed(p)

    def objective(b):
        ll, g, H = loglik(b)
        Sb = S_lam @ b
        return ll, g, H, ll - 0.5 * (b @ Sb), g - Sb

    ll, g, H, pen_obj, pen_grad = objective(beta)
    if not np.isfinite(pen_obj):
        raise InputError("log likelihood is not finite at the starting point")
    tol = grad_tol * max(1.0, np.abs(pen_grad).max())

    iterations = 0
    while iterations < max_iter:
        if np.abs(pen_grad).max() <= tol:
            break
        iterations += 1
        A = _repair_negdef(S_lam - H)
        try:
            step = np.linalg.solve(A, pen_grad)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Newton step solve failed: {exc}") from exc
        alpha, accepted = 1.0, False
        for _ in range(40):
            cand = beta + alpha * step
            ll_c, g_c, H_c, pen_c, pg_c = objective(cand)
            if np.isfinite(pen_c) and pen_c >= pen_obj - 1e-12 * abs(pen_obj):
                beta, ll, g, H = cand, ll_c, g_c, H_c
                pen_obj, pen_grad = pen_c, pg_c
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # cannot improve along the Newton direction: at numerical optimum
            break

    converged = np.abs(pen_grad).max() <= tol
    if not converged and iterations >= max_iter:
        raise ConvergenceError(
            f"penalized Newton did not converge in {max_iter} iterations "
            f"(|grad|={np.abs(pen_grad).max():.3e}, tol={tol:.3e})",
            last_beta=beta,
            diagnostics={"grad_norm": float(np.abs(pen_grad).max()), "tol": tol},
        )
    A = _repair_negdef(S_lam - H)
    try:
        V = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"penalized Hessian is singular: {exc}") from exc
    return NewtonResult(
        beta=beta,
        V=0.5 * (V + V.T),
        hess_ll=H,
        loglik=float(ll),
        penalized=float(pen_obj),
        grad_norm=float(np.abs(pen_grad).max()),
        iterations=iterations,
        converged=bool(converged),
    )


@dataclass
class LambdaState:
    """Everything the smoothing-parameter update needs from an inner fit."""

    beta: np.ndarray
    V: np.ndarray
    penalties: list[PenaltyBlock]
    lambdas: np.ndarray


def _pinv_trace_terms(S_lam: np.ndarray, blocks_full: list[np.ndarray]) -> list[float]:
    """tr(S_lam^- S_j) for each penalty, via an eigendecomposition pseudo-inverse."""
    w, Q = np.linalg.eigh(S_lam)
    top = max(w.max(), 0.0)
    keep = w > _EIG_EPS * top if top > 0 else np.zeros_like(w, dtype=bool)
    if not keep.any():
        return [0.0 for _ in blocks_full]
    Qk = Q[:, keep]
    inv_w = 1.0 / w[keep]
    out = []
    for Sj in blocks_full:
        M = Qk.T @ Sj @ Qk
        out.append(float(np.sum(inv_w * np.diag(M))))
    return out


def update_lambdas(state: LambdaState) -> tuple[np.ndarray, list[str]]:
    """Multiplicative smoothing-parameter update from a converged inner fit.

    Each ``lambda_j`` is scaled by
    ``(tr(S_lam^- S_j) - tr(V S_j)) / (beta' S_j beta)`` and clamped to
    ``[1e-8, 1e12]``. A coefficient vector lying in a penalty's null space
    sends that penalty to the upper clamp, flagged ``"null"``.
    """
    p = state.beta.size
    blocks_full = [blk.embed(p) for blk in state.penalties]
    S_lam = np.zeros((p, p))
    for lam, Sj in zip(state.lambdas, blocks_full):
        S_lam += lam * Sj
    tr_pinv = _pinv_trace_terms(S_lam, blocks_full)
    new = np.array(state.lambdas, dtype=float)
    flags = [""] * len(new)
    for j, (Sj, blk) in enumerate(zip(blocks_full, state.penalties)):
        den = float(state.beta @ Sj @ state.beta)
        num = tr_pinv[j] - float(np.sum(state.V * Sj))
        scale = float(np.abs(Sj).max()) * float(state.beta @ state.beta) + 1e-300
        if den <= 1e-14 * scale:
            new[j] = LAMBDA_MAX
            flags[j] = "null"
            continue
        if num <= 0.0:
            # likelihood curvature exceeds what the penalty can explain;
            # push upwards cautiously rather than taking a negative multiplier
            new[j] = min(new[j] * 10.0, LAMBDA_MAX)
            flags[j] = "nonpositive-numerator"
            continue
        new[j] = float(np.clip(new[j] * num / den, LAMBDA_MIN, LAMBDA_MAX))
        if new[j] in (LAMBDA_MIN, LAMBDA_MAX):
            flags[j] = "clamped"
    return new, flags


def _logdet_plus(S: np.ndarray) -> tuple[float, int]:
    """Log pseudo-determinant and rank of a PSD matrix."""
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    top = max(w.max(), 0.0)
    keep = w > _EIG_EPS * top if top > 0 else np.zeros_like(w, dtype=bool)
    return float(np.sum(np.log(w[keep]))), int(keep.sum())


def laplace_log_marginal(
    loglik_value: float,
    beta: np.ndarray,
    V: np.ndarray,
    penalties: list[PenaltyBlock],
    lambdas: np.ndarray,
) -> float:
    """Laplace-approximate log marginal likelihood of a penalized fit.

    The smoothing prior is the improper Gaussian induced by the penalties;
    its null-space directions (including any unpenalized parameters) are
    excluded from the prior normalizing constant.
    """
    p = beta.size
    S_lam = np.zeros((p, p))
    for lam, blk in zip(lambdas, penalties):
        S_lam += lam * blk.embed(p)
    ld_S, rank = _logdet_plus(S_lam)
    null_dim = p - rank
    sign, ld_V = np.linalg.slogdet(V)
    if sign <= 0:
        w = np.linalg.eigvalsh(V)
        raise NumericalError(
            "posterior covariance is singular",
            condition_number=float(w.max() / max(w.min(), 1e-300)),
        )
    return float(
        loglik_value
        - 0.5 * (beta @ S_lam @ beta)
        + 0.5 * ld_S
        + 0.5 * ld_V
        + 0.5 * null_dim * np.log(2.0 * np.pi)
    )


def fit_penalized(
    loglik,
    beta0: np.ndarray,
    penalties: list[PenaltyBlock],
    *,
    lambdas0: np.ndarray | None = None,
    outer_max: int = 100,
    lambda_rtol: float = 1e-4,
    newton_max: int = 200,
    grad_tol: float = 1e-6,
) -> PenalizedFit:
    """Alternate penalized Newton fits with smoothing-parameter updates.

    Iterates until every smoothing parameter changes by less than
    ``lambda_rtol`` in relative terms (parameters pinned at a clamp count
    as converged).
    """
    n_pen = len(penalties)
    lambdas = (
        np.ones(n_pen) if lambdas0 is None else np.asarray(lambdas0, dtype=float)
    )
    if lambdas.size != n_pen:
        raise InputError("one starting lambda per penalty is required")
    beta = np.array(beta0, dtype=float)
    inner_total = 0
    flags = [""] * n_pen
    res = None
    outer = 0
    converged = n_pen == 0
    for outer in range(1, outer_max + 1):
        res = penalized_newton(
            loglik, penalties, lambdas, beta, max_iter=newton_max, grad_tol=grad_tol
        )
        beta = res.beta
        inner_total += res.iterations
        if n_pen == 0:
            converged = True
            break
        new, flags = update_lambdas(
            LambdaState(beta=beta, V=res.V, penalties=penalties, lambdas=lambdas)
        )
        rel = np.abs(new - lambdas) / np.maximum(np.abs(lambdas), 1e-300)
        lambdas = new
        if np.max(rel) < lambda_rtol:
            converged = True
            break
    if res is None or (n_pen > 0 and not converged):
        # refit once at the final lambdas so reported quantities are coherent
        res = penalized_newton(
            loglik, penalties, lambdas, beta, max_iter=newton_max, grad_tol=grad_tol
        )
    log_marg = laplace_log_marginal(res.loglik, res.beta, res.V, penalties, lambdas)
    edf = float(np.sum(res.V * (-res.hess_ll)))
    return PenalizedFit(
        beta_hat=res.beta,
        V_beta=res.V,
        lambdas=lambdas,
        log_marginal=log_marg,
        converged=bool(converged),
        iterations=outer,
        loglik=res.loglik,
        edf=edf,
        penalties=penalties,
        lambda_flags=flags,
        hess_ll=res.hess_ll,
        inner_iterations=inner_total,
    )


# -- term assembly for additive models --------------------------------------


def centering_transform(rows: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the sum-to-zero constraint over ``rows``.

    ``rows`` is a design matrix at the constraint points; the returned
    ``Z`` (K x K-1) satisfies ``sum(rows @ Z, axis=0) == 0`` so a term built
    on ``X @ Z`` has fitted values summing to zero at those points.
    """
    c = rows.sum(axis=0)
    norm = np.linalg.norm(c)
    if norm == 0:
        raise NumericalError("degenerate centering constraint")
    # Householder reflection sending c to a multiple of e_1; remaining columns
    # span the constraint null space.
    v = c / norm
    e = np.zeros_like(v)
    e[0] = 1.0
    u = v - e
    un = np.linalg.norm(u)
    if un < 1e-14:
        Hm = np.eye(v.size)
    else:
        u /= un
        Hm = np.eye(v.size) - 2.0 * np.outer(u, u)
    return Hm[:, 1:]


@dataclass
class SmoothTerm:
    """A smooth term of an additive model, optionally centered."""

    basis: object
    centered: bool = False
    Z: np.ndarray | None = None
    label: str = ""

    def prepare(self, constraint_points: np.ndarray | None = None):
        if self.centered:
            pts = (
                np.asarray(constraint_points, dtype=float)
                if constraint_points is not None
                else self.basis.knots
            )
            self.Z = centering_transform(self.basis.design(pts))
        return self

    @property
    def dim(self) -> int:
        return self.basis.K - 1 if self.centered else self.basis.K

    def design(self, t: np.ndarray) -> np.ndarray:
        X = self.basis.design(t)
        return X @ self.Z if self.centered else X

    def penalty(self) -> Penalty:
        from .splines import penalty_from_matrix

        P = self.basis.penalty()
        if not self.centered:
            return P
        return penalty_from_matrix(self.Z.T @ P.S @ self.Z)

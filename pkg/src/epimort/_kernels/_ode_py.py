"""Pure-Python fallback for the fixed-step SEIR integration kernels.

Mirrors ``_ode_cy`` operation for operation; arithmetic is written in the
same order so both backends produce the same trajectories to rounding
error. Status codes: 0 ok, 1 negative state detected (step size too large),
2 MGF inversion failure.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_NEG_TOL = -1e-12


def powerlaw_rk4(r0, delta, gamma, lam, s0, e0, i0, dt, n_steps, trans=None):
    """SEIR with susceptible depletion rate ``r0*gamma*m(t)*S**lam*I``.

    ``trans`` is an optional transmission multiplier sampled at half-step
    resolution (length ``2*n_steps + 1``); ``None`` means constant 1.
    Returns (S, E, I, R, inc, status, bad_step).
    """
    c = r0 * gamma
    n = int(n_steps)
    S = np.empty(n + 1)
    E = np.empty(n + 1)
    I = np.empty(n + 1)
    R = np.empty(n + 1)
    inc = np.empty(n + 1)
    s, e, i, r = float(s0), float(e0), float(i0), 0.0
    S[0], E[0], I[0], R[0] = s, e, i, r

    def mult(k_half):
        return 1.0 if trans is None else float(trans[k_half])

    def rates(s_, e_, i_, m_):
        sp = s_ if s_ > 0.0 else 0.0
        x = c * m_ * sp**lam * i_
        return -x, x - delta * e_, delta * e_ - gamma * i_, gamma * i_, x

    inc[0] = rates(s, e, i, mult(0))[4]
    status, bad = 0, -1
    for k in range(n):
        m0, m1, m2 = mult(2 * k), mult(2 * k + 1), mult(2 * k + 2)
        d1s, d1e, d1i, d1r, _ = rates(s, e, i, m0)
        d2s, d2e, d2i, d2r, _ = rates(
            s + 0.5 * dt * d1s, e + 0.5 * dt * d1e, i + 0.5 * dt * d1i, m1
        )
        d3s, d3e, d3i, d3r, _ = rates(
            s + 0.5 * dt * d2s, e + 0.5 * dt * d2e, i + 0.5 * dt * d2i, m1
        )
        d4s, d4e, d4i, d4r, _ = rates(s + dt * d3s, e + dt * d3e, i + dt * d3i, m2)
        s += dt / 6.0 * (d1s + 2.0 * d2s + 2.0 * d3s + d4s)
        e += dt / 6.0 * (d1e + 2.0 * d2e + 2.0 * d3e + d4e)
        i += dt / 6.0 * (d1i + 2.0 * d2i + 2.0 * d3i + d4i)
        r += dt / 6.0 * (d1r + 2.0 * d2r + 2.0 * d3r + d4r)
        if s < _NEG_TOL or e < _NEG_TOL or i < _NEG_TOL:
            status, bad = 1, k + 1
            S[k + 1 :] = s
            E[k + 1 :] = e
            I[k + 1 :] = i
            R[k + 1 :] = r
            inc[k + 1 :] = 0.0
            break
        if s < 0.0:
            s = 0.0
        if e < 0.0:
            e = 0.0
        if i < 0.0:
            i = 0.0
        S[k + 1], E[k + 1], I[k + 1], R[k + 1] = s, e, i, r
        inc[k + 1] = rates(s, e, i, m2)[4]
    return S, E, I, R, inc, status, bad


def _invert_mgf(m, m1, s_target, q_start, tol, max_iter):
    """Solve m(-q) = s_target for q >= 0; m(-q) is decreasing in q.

    Safeguarded Newton with a bisection bracket. Returns (q, ok).
    """
    q = q_start if q_start > 0.0 else 0.0
    qlo, qhi = 0.0, -1.0  # qhi < 0 means "not yet bracketed above"
    v = m(-q)
    if v < s_target:
        qhi, qlo = q, 0.0
    else:
        qlo = q
    if qhi < 0.0:
        qhi = q if q > 1.0 else 1.0
        for _ in range(200):
            if m(-qhi) <= s_target:
                break
            qlo = qhi
            qhi *= 2.0
        else:
            return q, False
    for _ in range(max_iter):
        v = m(-q)
        err = v - s_target
        scale = s_target if s_target > 1e-300 else 1e-300
        if abs(err) <= tol * scale:
            return q, True
        if err > 0.0:
            qlo = q
        else:
            qhi = q
        # derivative of m(-q) wrt q is -m'(-q); m'(-q) > 0
        dv = m1(-q)
        step_ok = dv > 0.0
        if step_ok:
            qn = q + err / dv
            if not (qlo < qn < qhi):
                step_ok = False
        if not step_ok:
            qn = 0.5 * (qlo + qhi)
        q = qn
    return q, abs(m(-q) - s_target) <= 1e-9 * max(s_target, 1e-300)


def mgf_rk4(
    m,
    m1,
    m2,
    mode,
    r0,
    delta,
    gamma,
    dnorm,
    s0,
    e0,
    i0,
    dt,
    n_steps,
    newton_tol=1e-13,
    newton_max=100,
):
    """SEIR reduced by the moment generating function of the mixing parameter.

    ``mode`` 1 uses the first MGF derivative (variable susceptibility),
    mode 2 the second (variable contact rates); ``dnorm`` is the relevant
    derivative at 0, so the depletion rate at the epidemic start equals the
    homogeneous ``r0*gamma*S*I``. The susceptible fraction is the integrated
    state; ``q = M^{-1}(S)`` is recovered per stage by safeguarded Newton,
    warm-started from the running value.
    """
    c = r0 * gamma
    n = int(n_steps)
    S = np.empty(n + 1)
    E = np.empty(n + 1)
    I = np.empty(n + 1)
    R = np.empty(n + 1)
    inc = np.empty(n + 1)
    s, e, i, r = float(s0), float(e0), float(i0), 0.0
    S[0], E[0], I[0], R[0] = s, e, i, r
    q_warm = 0.0
    status, bad = 0, -1
    deriv = m1 if mode == 1 else m2

    def rates(s_, e_, i_, q_start):
        q, ok = _invert_mgf(
            m, m1, s_ if s_ > 0.0 else 0.0, q_start, newton_tol, newton_max
        )
        if not ok:
            raise _InversionFailure(q, s_)
        x = c * (deriv(-q) / dnorm) * i_
        return -x, x - delta * e_, delta * e_ - gamma * i_, gamma * i_, x, q

    try:
        out = rates(s, e, i, q_warm)
        inc[0], q_warm = out[4], out[5]
        for k in range(n):
            d1 = rates(s, e, i, q_warm)
            d2 = rates(s + 0.5 * dt * d1[0], e + 0.5 * dt * d1[1], i + 0.5 * dt * d1[2], d1[5])
            d3 = rates(s + 0.5 * dt * d2[0], e + 0.5 * dt * d2[1], i + 0.5 * dt * d2[2], d2[5])
            d4 = rates(s + dt * d3[0], e + dt * d3[1], i + dt * d3[2], d3[5])
            s += dt / 6.0 * (d1[0] + 2.0 * d2[0] + 2.0 * d3[0] + d4[0])
            e += dt / 6.0 * (d1[1] + 2.0 * d2[1] + 2.0 * d3[1] + d4[1])
            i += dt / 6.0 * (d1[2] + 2.0 * d2[2] + 2.0 * d3[2] + d4[2])
            r += dt / 6.0 * (d1[3] + 2.0 * d2[3] + 2.0 * d3[3] + d4[3])
            if s < _NEG_TOL or e < _NEG_TOL or i < _NEG_TOL:
                status, bad = 1, k + 1
                S[k + 1 :] = s
                E[k + 1 :] = e
                I[k + 1 :] = i
                R[k + 1 :] = r
                inc[k + 1 :] = 0.0
                break
            if s < 0.0:
                s = 0.0
            if e < 0.0:
                e = 0.0
            if i < 0.0:
                i = 0.0
            out = rates(s, e, i, d4[5])
            q_warm = out[5]
            S[k + 1], E[k + 1], I[k + 1], R[k + 1] = s, e, i, r
            inc[k + 1] = out[4]
    except _InversionFailure as exc:
        return S, E, I, R, inc, 2, exc.args[0]
    return S, E, I, R, inc, status, bad


class _InversionFailure(Exception):
    pass


def two_group_rk4(b11, b12, b21, b22, delta, gamma, y0, dt, n_steps):
    """Two coupled SEIR groups with cross-transmission matrix ``b``.

    ``y0`` is (S1, E1, I1, S2, E2, I2) in fractions of the total population.
    Returns arrays for all six states plus per-group incidence.
    """
    n = int(n_steps)
    out = np.empty((8, n + 1))
    s1, e1, i1, s2, e2, i2 = (float(v) for v in y0)

    def rates(s1_, e1_, i1_, s2_, e2_, i2_):
        x1 = s1_ * (b11 * i1_ + b12 * i2_)
        x2 = s2_ * (b21 * i1_ + b22 * i2_)
        return (
            -x1,
            x1 - delta * e1_,
            delta * e1_ - gamma * i1_,
            -x2,
            x2 - delta * e2_,
            delta * e2_ - gamma * i2_,
            x1,
            x2,
        )

    cur = (s1, e1, i1, s2, e2, i2)
    r = rates(*cur)
    out[:6, 0] = cur
    out[6, 0], out[7, 0] = r[6], r[7]
    status, bad = 0, -1
    for k in range(n):
        d1 = rates(*cur)
        d2 = rates(*(cur[j] + 0.5 * dt * d1[j] for j in range(6)))
        d3 = rates(*(cur[j] + 0.5 * dt * d2[j] for j in range(6)))
        d4 = rates(*(cur[j] + dt * d3[j] for j in range(6)))
        cur = tuple(
            cur[j] + dt / 6.0 * (d1[j] + 2.0 * d2[j] + 2.0 * d3[j] + d4[j])
            for j in range(6)
        )
        if min(cur) < _NEG_TOL:
            status, bad = 1, k + 1
            for j in range(6):
                out[j, k + 1 :] = cur[j]
            out[6:, k + 1 :] = 0.0
            break
        cur = tuple(v if v > 0.0 else 0.0 for v in cur)
        r = rates(*cur)
        out[:6, k + 1] = cur
        out[6, k + 1], out[7, k + 1] = r[6], r[7]
    return out, status, bad


def driven_ei_rk4(inc, delta, gamma, substeps, e0, i0):
    """Integrate E' = inc(t) - delta*E, I' = delta*E - gamma*I.

    ``inc`` holds daily incidence values; intermediate times use linear
    interpolation. Returns E and I at the daily nodes.
    """
    inc = np.asarray(inc, dtype=float)
    n = inc.size
    E = np.empty(n)
    I = np.empty(n)
    e, i = float(e0), float(i0)
    E[0], I[0] = e, i
    h = 1.0 / substeps
    for day in range(n - 1):
        a, b = inc[day], inc[day + 1]
        for k in range(substeps):
            u0 = a + (b - a) * (k * h)
            um = a + (b - a) * ((k + 0.5) * h)
            u1 = a + (b - a) * ((k + 1) * h)
            d1e = u0 - delta * e
            d1i = delta * e - gamma * i
            d2e = um - delta * (e + 0.5 * h * d1e)
            d2i = delta * (e + 0.5 * h * d1e) - gamma * (i + 0.5 * h * d1i)
            d3e = um - delta * (e + 0.5 * h * d2e)
            d3i = delta * (e + 0.5 * h * d2e) - gamma * (i + 0.5 * h * d2i)
            d4e = u1 - delta * (e + h * d3e)
            d4i = delta * (e + h * d3e) - gamma * (i + h * d3i)
            e += h / 6.0 * (d1e + 2.0 * d2e + 2.0 * d3e + d4e)
            i += h / 6.0 * (d1i + 2.0 * d2i + 2.0 * d3i + d4i)
        E[day + 1], I[day + 1] = e, i
    return E, I

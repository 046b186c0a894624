# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled fixed-step SEIR integration kernels.

Twin of ``_ode_py``; the arithmetic matches the fallback operation for
operation so both backends agree to rounding error. No fast-math is used,
to keep results reproducible across backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow

cnp.import_array()

BACKEND = "compiled"

cdef double _NEG_TOL = -1e-12


def powerlaw_rk4(double r0, double delta, double gamma, double lam,
                 double s0, double e0, double i0, double dt, int n_steps,
                 trans=None):
    """SEIR with susceptible depletion rate ``r0*gamma*m(t)*S**lam*I``."""
    cdef double c = r0 * gamma
    cdef int n = n_steps
    cdef cnp.ndarray[cnp.float64_t, ndim=1] S = np.empty(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] E = np.empty(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] I = np.empty(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] R = np.empty(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] inc = np.empty(n + 1)
    cdef double[::1] tr
    cdef bint has_tr = trans is not None
    if has_tr:
        tr = np.ascontiguousarray(trans, dtype=np.float64)
    else:
        tr = np.ones(1)
    cdef double s = s0, e = e0, i = i0, r = 0.0
    cdef double m0, m1, m2, sp, x
    cdef double d1s, d1e, d1i, d1r, d2s, d2e, d2i, d2r
    cdef double d3s, d3e, d3i, d3r, d4s, d4e, d4i, d4r
    cdef double ts, te, ti
    cdef int k, status = 0, bad = -1
    S[0] = s; E[0] = e; I[0] = i; R[0] = r
    sp = s if s > 0.0 else 0.0
    m0 = tr[0] if has_tr else 1.0
    inc[0] = c * m0 * pow(sp, lam) * i
    for k in range(n):
        m0 = tr[2 * k] if has_tr else 1.0
        m1 = tr[2 * k + 1] if has_tr else 1.0
        m2 = tr[2 * k + 2] if has_tr else 1.0

        sp = s if s > 0.0 else 0.0
        x = c * m0 * pow(sp, lam) * i
        d1s = -x; d1e = x - delta * e; d1i = delta * e - gamma * i; d1r = gamma * i

        ts = s + 0.5 * dt * d1s; te = e + 0.5 * dt * d1e; ti = i + 0.5 * dt * d1i
        sp = ts if ts > 0.0 else 0.0
        x = c * m1 * pow(sp, lam) * ti
        d2s = -x; d2e = x - delta * te; d2i = delta * te - gamma * ti; d2r = gamma * ti

        ts = s + 0.5 * dt * d2s; te = e + 0.5 * dt * d2e; ti = i + 0.5 * dt * d2i
        sp = ts if ts > 0.0 else 0.0
        x = c * m1 * pow(sp, lam) * ti
        d3s = -x; d3e = x - delta * te; d3i = delta * te - gamma * ti; d3r = gamma * ti

        ts = s + dt * d3s; te = e + dt * d3e; ti = i + dt * d3i
        sp = ts if ts > 0.0 else 0.0
        x = c * m2 * pow(sp, lam) * ti
        d4s = -x; d4e = x - delta * te; d4i = delta * te - gamma * ti; d4r = gamma * ti

        s += dt / 6.0 * (d1s + 2.0 * d2s + 2.0 * d3s + d4s)
        e += dt / 6.0 * (d1e + 2.0 * d2e + 2.0 * d3e + d4e)
        i += dt / 6.0 * (d1i + 2.0 * d2i + 2.0 * d3i + d4i)
        r += dt / 6.0 * (d1r + 2.0 * d2r + 2.0 * d3r + d4r)
        if s < _NEG_TOL or e < _NEG_TOL or i < _NEG_TOL:
            status = 1; bad = k + 1
            S[k + 1:] = s; E[k + 1:] = e; I[k + 1:] = i; R[k + 1:] = r
            inc[k + 1:] = 0.0
            break
        if s < 0.0:
            s = 0.0
        if e < 0.0:
            e = 0.0
        if i < 0.0:
            i = 0.0
        S[k + 1] = s; E[k + 1] = e; I[k + 1] = i; R[k + 1] = r
        sp = s if s > 0.0 else 0.0
        inc[k + 1] = c * m2 * pow(sp, lam) * i
    return S, E, I, R, inc, status, bad


cdef tuple _invert_mgf(object m, object m1, double s_target, double q_start,
                       double tol, int max_iter):
    """Solve m(-q) = s_target for q >= 0 by safeguarded Newton."""
    cdef double q = q_start if q_start > 0.0 else 0.0
    cdef double qlo = 0.0, qhi = -1.0
    cdef double v, err, dv, qn, scale
    cdef int it
    v = <double> m(-q)
    if v < s_target:
        qhi = q; qlo = 0.0
    else:
        qlo = q
    if qhi < 0.0:
        qhi = q if q > 1.0 else 1.0
        for it in range(200):
            if <double> m(-qhi) <= s_target:
                break
            qlo = qhi
            qhi *= 2.0
        else:
            return q, False
    for it in range(max_iter):
        v = <double> m(-q)
        err = v - s_target
        scale = s_target if s_target > 1e-300 else 1e-300
        if (err if err >= 0 else -err) <= tol * scale:
            return q, True
        if err > 0.0:
            qlo = q
        else:
            qhi = q
        dv = <double> m1(-q)
        if dv > 0.0:
            qn = q + err / dv
            if not (qlo < qn < qhi):
                qn = 0.5 * (qlo + qhi)
        else:
            qn = 0.5 * (qlo + qhi)
        q = qn
    v = <double> m(-q)
    err = v - s_target
    scale = s_target if s_target > 1e-300 else 1e-300
    return q, (err if err >= 0 else -err) <= 1e-9 * scale


def mgf_rk4(object m, object m1, object m2, int mode,
            double r0, double delta, double gamma, double dnorm,
            double s0, double e0, double i0, double dt, int n_steps,
            double newton_tol=1e-13, int newton_max=100):
    """SEIR reduced through the MGF of the mixing parameter distribution."""
    cdef double c = r0 * gamma
    cdef int n = n_steps
    cdef cnp.ndarray[cnp.float64_t, ndim=1] S = np.empty(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] E = np.empty(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] I = np.empty(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] R = np.empty(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] inc = np.empty(n + 1)
    cdef double s = s0, e = e0, i = i0, r = 0.0
    cdef double q_warm = 0.0, q
    cdef double x
    cdef double d10, d11, d12, d13, d20, d21, d22, d23
    cdef double d30, d31, d32, d33, d40, d41, d42, d43
    cdef double ts, te, ti
    cdef int k, status = 0, bad = -1
    cdef bint ok
    deriv = m1 if mode == 1 else m2

    S[0] = s; E[0] = e; I[0] = i; R[0] = r

    q, ok = _invert_mgf(m, m1, s if s > 0.0 else 0.0, q_warm, newton_tol, newton_max)
    if not ok:
        return S, E, I, R, inc, 2, q
    q_warm = q
    inc[0] = c * ((<double> deriv(-q)) / dnorm) * i

    for k in range(n):
        q, ok = _invert_mgf(m, m1, s if s > 0.0 else 0.0, q_warm, newton_tol, newton_max)
        if not ok:
            return S, E, I, R, inc, 2, q
        x = c * ((<double> deriv(-q)) / dnorm) * i
        d10 = -x; d11 = x - delta * e; d12 = delta * e - gamma * i; d13 = gamma * i

        ts = s + 0.5 * dt * d10; te = e + 0.5 * dt * d11; ti = i + 0.5 * dt * d12
        q, ok = _invert_mgf(m, m1, ts if ts > 0.0 else 0.0, q, newton_tol, newton_max)
        if not ok:
            return S, E, I, R, inc, 2, q
        x = c * ((<double> deriv(-q)) / dnorm) * ti
        d20 = -x; d21 = x - delta * te; d22 = delta * te - gamma * ti; d23 = gamma * ti

        ts = s + 0.5 * dt * d20; te = e + 0.5 * dt * d21; ti = i + 0.5 * dt * d22
        q, ok = _invert_mgf(m, m1, ts if ts > 0.0 else 0.0, q, newton_tol, newton_max)
        if not ok:
            return S, E, I, R, inc, 2, q
        x = c * ((<double> deriv(-q)) / dnorm) * ti
        d30 = -x; d31 = x - delta * te; d32 = delta * te - gamma * ti; d33 = gamma * ti

        ts = s + dt * d30; te = e + dt * d31; ti = i + dt * d32
        q, ok = _invert_mgf(m, m1, ts if ts > 0.0 else 0.0, q, newton_tol, newton_max)
        if not ok:
            return S, E, I, R, inc, 2, q
        x = c * ((<double> deriv(-q)) / dnorm) * ti
        d40 = -x; d41 = x - delta * te; d42 = delta * te - gamma * ti; d43 = gamma * ti

        s += dt / 6.0 * (d10 + 2.0 * d20 + 2.0 * d30 + d40)
        e += dt / 6.0 * (d11 + 2.0 * d21 + 2.0 * d31 + d41)
        i += dt / 6.0 * (d12 + 2.0 * d22 + 2.0 * d32 + d42)
        r += dt / 6.0 * (d13 + 2.0 * d23 + 2.0 * d33 + d43)
        if s < _NEG_TOL or e < _NEG_TOL or i < _NEG_TOL:
            status = 1; bad = k + 1
            S[k + 1:] = s; E[k + 1:] = e; I[k + 1:] = i; R[k + 1:] = r
            inc[k + 1:] = 0.0
            break
        if s < 0.0:
            s = 0.0
        if e < 0.0:
            e = 0.0
        if i < 0.0:
            i = 0.0
        q, ok = _invert_mgf(m, m1, s if s > 0.0 else 0.0, q, newton_tol, newton_max)
        if not ok:
            return S, E, I, R, inc, 2, q
        q_warm = q
        S[k + 1] = s; E[k + 1] = e; I[k + 1] = i; R[k + 1] = r
        inc[k + 1] = c * ((<double> deriv(-q)) / dnorm) * i
    return S, E, I, R, inc, status, bad


def two_group_rk4(double b11, double b12, double b21, double b22,
                  double delta, double gamma, y0, double dt, int n_steps):
    """Two coupled SEIR groups with cross-transmission matrix ``b``."""
    cdef int n = n_steps
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((8, n + 1))
    cdef double s1 = y0[0], e1 = y0[1], i1 = y0[2]
    cdef double s2 = y0[3], e2 = y0[4], i2 = y0[5]
    cdef double x1, x2
    cdef double d1[6]
    cdef double d2[6]
    cdef double d3[6]
    cdef double d4[6]
    cdef double t[6]
    cdef double cur[6]
    cdef int k, j, status = 0, bad = -1
    cur[0] = s1; cur[1] = e1; cur[2] = i1; cur[3] = s2; cur[4] = e2; cur[5] = i2

    x1 = cur[0] * (b11 * cur[2] + b12 * cur[5])
    x2 = cur[3] * (b21 * cur[2] + b22 * cur[5])
    for j in range(6):
        out[j, 0] = cur[j]
    out[6, 0] = x1; out[7, 0] = x2

    for k in range(n):
        _tg_rates(cur, b11, b12, b21, b22, delta, gamma, d1)
        for j in range(6):
            t[j] = cur[j] + 0.5 * dt * d1[j]
        _tg_rates(t, b11, b12, b21, b22, delta, gamma, d2)
        for j in range(6):
            t[j] = cur[j] + 0.5 * dt * d2[j]
        _tg_rates(t, b11, b12, b21, b22, delta, gamma, d3)
        for j in range(6):
            t[j] = cur[j] + dt * d3[j]
        _tg_rates(t, b11, b12, b21, b22, delta, gamma, d4)
        for j in range(6):
            cur[j] = cur[j] + dt / 6.0 * (d1[j] + 2.0 * d2[j] + 2.0 * d3[j] + d4[j])
        if (cur[0] < _NEG_TOL or cur[1] < _NEG_TOL or cur[2] < _NEG_TOL or
                cur[3] < _NEG_TOL or cur[4] < _NEG_TOL or cur[5] < _NEG_TOL):
            status = 1; bad = k + 1
            for j in range(6):
                out[j, k + 1:] = cur[j]
            out[6, k + 1:] = 0.0
            out[7, k + 1:] = 0.0
            break
        for j in range(6):
            if cur[j] < 0.0:
                cur[j] = 0.0
        x1 = cur[0] * (b11 * cur[2] + b12 * cur[5])
        x2 = cur[3] * (b21 * cur[2] + b22 * cur[5])
        for j in range(6):
            out[j, k + 1] = cur[j]
        out[6, k + 1] = x1; out[7, k + 1] = x2
    return np.asarray(out), status, bad


cdef inline void _tg_rates(double* y, double b11, double b12, double b21,
                           double b22, double delta, double gamma,
                           double* d) noexcept:
    cdef double x1 = y[0] * (b11 * y[2] + b12 * y[5])
    cdef double x2 = y[3] * (b21 * y[2] + b22 * y[5])
    d[0] = -x1
    d[1] = x1 - delta * y[1]
    d[2] = delta * y[1] - gamma * y[2]
    d[3] = -x2
    d[4] = x2 - delta * y[4]
    d[5] = delta * y[4] - gamma * y[5]


def driven_ei_rk4(inc, double delta, double gamma, int substeps,
                  double e0, double i0):
    """Integrate E' = inc(t) - delta*E, I' = delta*E - gamma*I (daily nodes)."""
    cdef double[::1] u = np.ascontiguousarray(inc, dtype=np.float64)
    cdef int n = u.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] E = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] I = np.empty(n)
    cdef double e = e0, i = i0
    cdef double h = 1.0 / substeps
    cdef double a, b, u0, um, u1
    cdef double d1e, d1i, d2e, d2i, d3e, d3i, d4e, d4i
    cdef int day, k
    E[0] = e; I[0] = i
    for day in range(n - 1):
        a = u[day]; b = u[day + 1]
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
        E[day + 1] = e; I[day + 1] = i
    return E, I

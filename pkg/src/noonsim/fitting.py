"""Weighted least-squares fits of fringe and dip shapes.

Models (x is the scan setting, theta in rad or delay in ns):

* ``cosine_k``       A (1 - cos(w x - phi)) / 2 + B,  w = 2k unless fitted
* ``cosine_squared`` A (1 - cos(2x - phi))^2 / 4 + B
* ``gaussian_dip``   C (1 - V exp(-x^2 / tau^2))

The k-harmonic fit is seeded from an exact linear solve in (1, cos wx, sin wx);
the squared model from a phase grid with A and B solved exactly. Both are then
refined by Levenberg-Marquardt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .detection import FringeScan

MAX_ITER = 200
XTOL = 1e-9
FTOL = 1e-12
MIN_POINTS = 8


class FitError(RuntimeError):
    pass


def _cos_k(x, p):
    a, b, phi, w = p
    return a * (1.0 - np.cos(w * x - phi)) / 2.0 + b


def _cos_k_jac(x, p):
    a, b, phi, w = p
    c, s = np.cos(w * x - phi), np.sin(w * x - phi)
    return np.column_stack([(1.0 - c) / 2.0, np.ones_like(x), -a * s / 2.0, a * s * x / 2.0])


def _cos_sq(x, p):
    a, b, phi = p
    return a * (1.0 - np.cos(2 * x - phi)) ** 2 / 4.0 + b


def _cos_sq_jac(x, p):
    a, b, phi = p
    d = 1.0 - np.cos(2 * x - phi)
    return np.column_stack([d ** 2 / 4.0, np.ones_like(x), -a * d * np.sin(2 * x - phi) / 2.0])


def _gauss(x, p):
    c, v, tau = p
    return c * (1.0 - v * np.exp(-(x ** 2) / tau ** 2))


def _gauss_jac(x, p):
    c, v, tau = p
    g = np.exp(-(x ** 2) / tau ** 2)
    return np.column_stack([1.0 - v * g, -c * g, -c * v * g * 2 * x ** 2 / tau ** 3])


_MODELS = {
    "cosine_k": (_cos_k, _cos_k_jac, ("amplitude", "offset", "phase_origin", "frequency")),
    "cosine_squared": (_cos_sq, _cos_sq_jac, ("amplitude", "offset", "phase_origin")),
    "gaussian_dip": (_gauss, _gauss_jac, ("baseline", "visibility", "width")),
}


@dataclass
class FitResult:
    model: str
    params: dict
    stderr: dict
    residual_rms: float
    covariance: np.ndarray = field(repr=False)
    x_range: tuple = (0.0, 0.0)
    k: int | None = None
    free: tuple = ()

    def _vector(self):
        names = _MODELS[self.model][2]
        return np.array([self.params[n] for n in names])

    def predict(self, x) -> np.ndarray:
        return _MODELS[self.model][0](np.asarray(x, dtype=float), self._vector())

    @property
    def visibility(self) -> float:
        if self.model == "gaussian_dip":
            return self.params["visibility"]
        a, b = self.params["amplitude"], self.params["offset"]
        return a / (a + 2.0 * b)

    @property
    def visibility_stderr(self) -> float:
        if self.model == "gaussian_dip":
            return self.stderr["visibility"]
        a, b = self.params["amplitude"], self.params["offset"]
        den = (a + 2.0 * b) ** 2
        grad = np.zeros(len(self.free))
        for i, name in enumerate(self.free):
            if name == "amplitude":
                grad[i] = 2.0 * b / den
            elif name == "offset":
                grad[i] = -2.0 * a / den
        var = float(grad @ self.covariance @ grad)
        return math.sqrt(var) if np.isfinite(var) and var >= 0 else math.inf


def _covariance(jac_w: np.ndarray) -> np.ndarray:
    """(J^T J)^-1 with infinite variance along unidentifiable directions."""
    _, s, vt = np.linalg.svd(jac_w, full_matrices=False)
    tol = s.max() * max(jac_w.shape) * np.finfo(float).eps * 1e3 if s.size else 0.0
    good = s > tol
    cov = (vt[good].T / s[good] ** 2) @ vt[good]
    for v in vt[~good]:
        for i in np.flatnonzero(np.abs(v) > 1e-6):
            cov[i, :] = cov[:, i] = np.inf
    return cov


def _solve(model, x, y, sigma, p0, free_mask, absolute_sigma):
    fn, jac, names = _MODELS[model]
    p0 = np.asarray(p0, dtype=float)
    free_idx = np.flatnonzero(free_mask)

    def full(q):
        p = p0.copy()
        p[free_idx] = q
        return p

    def resid(q):
        return (fn(x, full(q)) - y) / sigma

    def rjac(q):
        return jac(x, full(q))[:, free_idx] / sigma[:, None]

    res = least_squares(
        resid, p0[free_idx], jac=rjac, method="lm", xtol=XTOL, ftol=FTOL, gtol=FTOL,
        max_nfev=MAX_ITER * (free_idx.size + 1),
    )
    if res.status <= 0:
        raise FitError(f"{model} fit did not converge: {res.message}")
    p = full(res.x)
    jw = rjac(res.x)
    cov = _covariance(jw)
    dof = x.size - free_idx.size
    if not absolute_sigma and dof > 0:
        scale = float(np.sum(res.fun ** 2)) / dof
        with np.errstate(invalid="ignore"):
            cov = np.where(np.isinf(cov), cov, cov * scale)
    err = np.zeros(p.size)
    err[free_idx] = np.sqrt(np.abs(np.diag(cov)))
    residual_rms = float(np.sqrt(np.mean((fn(x, p) - y) ** 2)))
    return p, err, cov, residual_rms, tuple(names[i] for i in free_idx)


def _data(scan, use_expected):
    if isinstance(scan, FringeScan):
        x = scan.settings
        y = scan.values(use_expected)
    else:
        x, y = (np.asarray(v, dtype=float) for v in scan)
    if use_expected:
        sigma = np.ones_like(y)
    else:
        sigma = np.sqrt(np.maximum(y, 1.0))
    return x, y, sigma


def _covered_span(x):
    return (x.max() - x.min()) * x.size / (x.size - 1) if x.size > 1 else 0.0


def _harmonic_seed(x, y, sigma, w):
    basis = np.column_stack([np.ones_like(x), np.cos(w * x), np.sin(w * x)]) / sigma[:, None]
    c0, c1, c2 = np.linalg.lstsq(basis, y / sigma, rcond=None)[0]
    half = math.hypot(c1, c2)
    phi = math.atan2(-c2, -c1)
    return 2.0 * half, c0 - half, phi


def _profile_seed(x, y, sigma, n_grid=720):
    """Best (A, B, phi) for the squared model with A, B solved exactly on a phase grid.

    The model is linear in A and B, so profiling them out leaves a 1-D scan
    that avoids the long curved valleys LM can crawl along from a poor seed.
    """
    best, best_cost = None, math.inf
    for phi in np.linspace(-math.pi, math.pi, n_grid, endpoint=False):
        basis = np.column_stack([(1.0 - np.cos(2 * x - phi)) ** 2 / 4.0, np.ones_like(x)]) / sigma[:, None]
        coef, *_ = np.linalg.lstsq(basis, y / sigma, rcond=None)
        cost = float(np.sum((basis @ coef - y / sigma) ** 2))
        if cost < best_cost:
            best, best_cost = (float(coef[0]), float(coef[1]), float(phi)), cost
    return best


def fit_fringe(scan, k: int = 2, model: str = "cosine_k", free_frequency: bool = False,
               use_expected: bool = False) -> FitResult:
    """Fit a phase fringe scanned in theta.

    ``scan`` is a :class:`FringeScan` or an ``(x, y)`` pair. Counts are
    weighted by 1/max(y, 1); ``use_expected`` fits the noiseless expected
    counts with unit weights instead.
    """
    if model not in ("cosine_k", "cosine_squared"):
        raise ValueError(f"unknown fringe model {model!r}")
    x, y, sigma = _data(scan, use_expected)
    if x.size < MIN_POINTS:
        raise FitError(f"need at least {MIN_POINTS} points, got {x.size}")
    w0 = 2.0 * k if model == "cosine_k" else 2.0
    if _covered_span(x) < 2 * math.pi / w0 - 1e-12:
        raise FitError("scan does not span one fringe period")
    if model == "cosine_k":
        a, b, phi = _harmonic_seed(x, y, sigma, w0)
        p0 = [a, b, phi, w0]
        mask = [True, True, True, free_frequency]
    else:
        p0 = list(_profile_seed(x, y, sigma))
        mask = [True, True, True]
    p, err, cov, rms, free = _solve(model, x, y, sigma, p0, np.array(mask), not use_expected)
    if model == "cosine_k" and p[0] < 0:
        # same curve with positive amplitude, half a period away
        p[1] += p[0]
        p[0] = -p[0]
        p[2] -= math.pi
        t = np.eye(len(free))
        ia, ib = free.index("amplitude"), free.index("offset")
        t[ia, ia] = -1.0
        t[ib, ia] = 1.0
        with np.errstate(invalid="ignore"):
            cov = t @ cov @ t.T
        err[1] = math.sqrt(abs(cov[ib, ib]))
    p[2] = (p[2] + math.pi) % (2 * math.pi) - math.pi
    names = _MODELS[model][2]
    return FitResult(
        model=model,
        params=dict(zip(names, map(float, p))),
        stderr=dict(zip(names, map(float, err))),
        residual_rms=rms,
        covariance=cov,
        x_range=(float(x.min()), float(x.max())),
        k=k if model == "cosine_k" else None,
        free=free,
    )


def fit_gaussian_dip(scan, use_expected: bool = False) -> FitResult:
    """Fit C (1 - V exp(-x^2/tau^2)) centred on zero delay; V < 0 is a peak."""
    x, y, sigma = _data(scan, use_expected)
    if x.size < MIN_POINTS:
        raise FitError(f"need at least {MIN_POINTS} points, got {x.size}")
    r = np.abs(x)
    wings = r >= np.quantile(r, 0.8)
    c0 = float(np.mean(y[wings]))
    if c0 == 0.0:
        raise FitError("zero baseline")
    centre = y[np.argmin(r)]
    v0 = 1.0 - centre / c0
    depth = c0 - y
    second_moment = np.sum(depth * x ** 2) / depth.sum() if depth.sum() != 0 else 0.0
    if np.sign(v0) * depth.sum() > 0 and abs(v0) > 1e-12 and second_moment > 0:
        tau0 = math.sqrt(2.0 * second_moment)
    else:
        tau0 = float(r.max()) / 4.0
    tau0 = min(max(tau0, 1e-3 * r.max()), r.max())
    p, err, cov, rms, free = _solve("gaussian_dip", x, y, sigma, [c0, v0, tau0], np.ones(3, bool), not use_expected)
    p[2] = abs(p[2])
    names = _MODELS["gaussian_dip"][2]
    return FitResult(
        model="gaussian_dip",
        params=dict(zip(names, map(float, p))),
        stderr=dict(zip(names, map(float, err))),
        residual_rms=rms,
        covariance=cov,
        x_range=(float(x.min()), float(x.max())),
        free=free,
    )

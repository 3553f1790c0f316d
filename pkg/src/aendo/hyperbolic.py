"""Splittings along backward branches, hyperbolicity constants and the adapted metric.

Linear algebra is done in the *metric frame*: on the sphere a chart vector v at
z is represented by rho(z) v, where rho is the conformal factor, and the
Jacobian by rho(f z) / rho(z) * Df.  In that frame the Riemannian norm is the
Euclidean one, so singular values are manifold quantities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateSplitting, DivergentSum, SingularPointError
from .geometry import Point, TangentVector, conformal_factor, is_infinite, raw
from .models import Endomorphism, regular_mask
from .natural_extension import BackwardBranch, shift_forward

GRAM_TOL = 1e-8


@dataclass(frozen=True)
class Splitting:
    base: Point
    branch: BackwardBranch
    Eu: tuple
    Es: tuple
    dims: tuple
    # orthonormal bases in the metric frame at the base point, shape (d, u) and (d, s)
    eu_frame: np.ndarray = field(repr=False, compare=False)
    es_frame: np.ndarray = field(repr=False, compare=False)

    def project(self, v):
        """Split a metric-frame vector into its (stable, unstable) parts."""
        B = np.hstack([self.es_frame, self.eu_frame])
        c = np.linalg.solve(B, np.asarray(v, dtype=float))
        s = self.dims[1]
        return self.es_frame @ c[:s], self.eu_frame @ c[s:]


@dataclass(frozen=True)
class HyperbolicityEstimate:
    C: float
    lambda_: float
    sample_count: int
    worst_violation: float
    stable_rate: float = float("nan")
    unstable_rate: float = float("nan")

    @property
    def hyperbolic(self) -> bool:
        return self.worst_violation <= 0.0 and self.lambda_ < 1.0


def rho(f: Endomorphism, X):
    """Metric-frame scale at raw points (1 on tori)."""
    if f.manifold.is_torus:
        return np.ones(len(X))
    return conformal_factor(X)


def metric_jacobians(f: Endomorphism, X):
    X = np.asarray(X)
    J = f.jac_raw(X)
    if f.manifold.is_sphere:
        J = J * (conformal_factor(f.eval_raw(X)) / conformal_factor(X))[:, None, None]
    return J


def check_regular(f: Endomorphism, X, what="branch"):
    X = np.asarray(X)
    if f.manifold.is_sphere and np.any(is_infinite(X)):
        lvl = int(np.nonzero(is_infinite(X))[0][0])
        raise SingularPointError(f"{what} meets the point at infinity at level -{lvl}", level=lvl)
    ok = regular_mask(f, X)
    if not np.all(ok):
        lvl = int(np.nonzero(~ok)[0][0])
        raise SingularPointError(f"{what} meets a singular point at level -{lvl}", level=lvl)


def forward_orbit(f: Endomorphism, x, n: int):
    """Raw points x, f x, ..., f^n x."""
    X = [np.asarray(x)]
    for _ in range(n):
        X.append(f.eval_raw(X[-1][None, ...] if f.manifold.is_torus else np.array([X[-1]]))[0])
    return np.array(X)


def chain_product(Js):
    """J_{n-1} ... J_0 for a sequence of one-step Jacobians."""
    d = Js.shape[-1]
    P = np.eye(d)
    for J in Js:
        P = J @ P
    return P


def estimate_splitting(f: Endomorphism, b: BackwardBranch, fwd: int = 16) -> Splitting:
    if fwd < 1:
        raise ValueError("fwd must be at least 1")
    if b.depth < 1:
        raise ValueError("the branch needs depth at least 1")
    d = f.manifold.dimension
    B = b.as_array()
    check_regular(f, B)
    Xf = forward_orbit(f, B[0], fwd)
    check_regular(f, Xf[:-1], what="forward orbit")

    # stable directions: contracted right singular vectors of Df^fwd at x_0
    _, S, Vt = np.linalg.svd(chain_product(metric_jacobians(f, Xf[:-1])))
    es = Vt[S < 1.0].T

    # unstable directions: expanded left singular vectors of the product along the branch
    Jb = metric_jacobians(f, B[1:][::-1])
    U, S2, _ = np.linalg.svd(chain_product(Jb))
    eu = U[:, S2 > 1.0]

    u, s = eu.shape[1], es.shape[1]
    if u + s != d:
        raise DegenerateSplitting(f"estimated dimensions ({u}, {s}) do not add up to {d}")
    M = np.hstack([eu, es])
    gram = float(np.linalg.det(M.T @ M))
    if gram <= GRAM_TOL:
        raise DegenerateSplitting(f"Gram determinant {gram:.3g} of Eu + Es is too small")
    r0 = float(rho(f, B[:1])[0])
    Eu = tuple(TangentVector(b.root, tuple(eu[:, i] / r0)) for i in range(u))
    Es = tuple(TangentVector(b.root, tuple(es[:, i] / r0)) for i in range(s))
    return Splitting(b.root, b, Eu, Es, (u, s), eu, es)


def restricted_singular_values(f: Endomorphism, x, E, horizon: int):
    """Extreme singular values of Df^k restricted to span(E), k = 0..horizon.

    ``E`` is an orthonormal metric-frame basis at raw point ``x``.
    Returns arrays ``(smax, smin)`` of length horizon + 1.
    """
    Xf = forward_orbit(f, x, horizon)
    check_regular(f, Xf[:-1], what="forward orbit")
    Js = metric_jacobians(f, Xf[:-1])
    W = np.array(E, dtype=float)
    smax = np.ones(horizon + 1)
    smin = np.ones(horizon + 1)
    for k, J in enumerate(Js, start=1):
        W = J @ W
        sv = np.linalg.svd(W, compute_uv=False)
        smax[k], smin[k] = sv[0], sv[-1]
    return smax, smin


def verify_hyperbolic(
    f: Endomorphism, samples: Sequence[BackwardBranch], horizon: int = 16, fwd: int = 16
) -> HyperbolicityEstimate:
    """Fit constants (C, lambda) of the hyperbolicity inequalities over sampled branches.

    lambda is the worst horizon-step rate over both bundles; C is then the
    smallest constant making every sampled inequality hold for k <= horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    runs = []
    for b in samples:
        sp = estimate_splitting(f, b, fwd)
        x0 = b.as_array()[0]
        st = restricted_singular_values(f, x0, sp.es_frame, horizon) if sp.dims[1] else None
        un = restricted_singular_values(f, x0, sp.eu_frame, horizon) if sp.dims[0] else None
        runs.append((st, un))
    if not runs:
        raise ValueError("no samples")
    stable_rate = max((st[0][-1] ** (1.0 / horizon) for st, _ in runs if st is not None), default=0.0)
    unstable_rate = max((un[1][-1] ** (-1.0 / horizon) for _, un in runs if un is not None), default=0.0)
    stable_rate, unstable_rate = float(stable_rate), float(unstable_rate)
    lam = max(stable_rate, unstable_rate)
    if lam >= 1.0 or lam <= 0.0:
        return HyperbolicityEstimate(float("inf"), lam, len(runs), lam - 1.0, stable_rate, unstable_rate)
    k = np.arange(horizon + 1)
    C = 1.0
    for st, un in runs:
        if st is not None:
            C = max(C, float(np.max(st[0] / lam**k)))
        if un is not None:
            C = max(C, float(np.max(lam ** (-k) / un[1])))
    # relative residual of both inequalities; rounding below 1e-12 counts as zero
    worst = -np.inf
    for st, un in runs:
        if st is not None:
            worst = max(worst, float(np.max(st[0] / (C * lam**k))) - 1.0)
        if un is not None:
            worst = max(worst, float(np.max(lam ** (-k) / (C * un[1]))) - 1.0)
    if abs(worst) < 1e-12:
        worst = 0.0
    return HyperbolicityEstimate(C, lam, len(runs), worst, stable_rate, unstable_rate)


class AdaptedNorm:
    """Finite-sum Lyapunov norm on a hyperbolic set.

    ||v||^2 = sum_j lambda*^(-2j) (||Df^j v_s||^2 + ||Df^-j v_u||^2), j = 0..m,
    where Df^-j follows the inverse branch.  With these weights the one-step
    bounds hold as soon as Df^(m+1) contracts Es (expands Eu) by lambda*^(m+1).
    """

    def __init__(self, f: Endomorphism, samples: Sequence[BackwardBranch], lambda_star: float, m: int = 12, fwd: int = 16):
        if not 0.0 < lambda_star < 1.0:
            raise ValueError("lambda_star must lie in (0, 1)")
        if m < 1:
            raise ValueError("m must be at least 1")
        self.f = f
        self.lambda_star = float(lambda_star)
        self.m = int(m)
        self.fwd = fwd
        self.samples = list(samples)
        for b in self.samples:
            if b.depth < self.m:
                raise ValueError(f"branch depth {b.depth} is below m = {self.m}")
            self._check_growth(b)

    @property
    def depth(self):
        return self.m

    def _weights(self):
        return self.lambda_star ** (-2.0 * np.arange(self.m + 1))

    def _stable_terms(self, b, vs):
        x0 = b.as_array()[0]
        Xf = forward_orbit(self.f, x0, self.m)
        Js = metric_jacobians(self.f, Xf[:-1])
        out = [float(vs @ vs)]
        w = vs
        for J in Js:
            w = J @ w
            out.append(float(w @ w))
        return np.array(out)

    def _unstable_terms(self, b, vu):
        B = b.as_array()[: self.m + 1]
        Js = metric_jacobians(self.f, B[1:])
        out = [float(vu @ vu)]
        w = vu
        for J in Js:
            w = np.linalg.solve(J, w)
            out.append(float(w @ w))
        return np.array(out)

    def _check_growth(self, b):
        sp = estimate_splitting(self.f, b, self.fwd)
        wts = self._weights()
        for frame, terms in ((sp.es_frame, self._stable_terms), (sp.eu_frame, self._unstable_terms)):
            for i in range(frame.shape[1]):
                t = wts * terms(b, frame[:, i])
                if t[-1] > t[0]:
                    raise DivergentSum(
                        f"term {self.m} exceeds term 0 ({t[-1]:.3g} > {t[0]:.3g}); lambda_star is below the true rate"
                    )

    def norm_metric(self, b: BackwardBranch, v, splitting: Splitting | None = None) -> float:
        """Adapted norm of a metric-frame vector at the root of ``b``."""
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            return 0.0
        sp = splitting or estimate_splitting(self.f, b, self.fwd)
        vs, vu = sp.project(v)
        wts = self._weights()
        total = 0.0
        if sp.dims[1]:
            total += float(wts @ self._stable_terms(b, vs))
        if sp.dims[0]:
            total += float(wts @ self._unstable_terms(b, vu))
        return float(np.sqrt(total))

    def __call__(self, b: BackwardBranch, v: TangentVector) -> float:
        r = float(rho(self.f, b.as_array()[:1])[0])
        return self.norm_metric(b, r * np.asarray(v.components, dtype=float))

    def one_step_check(self, b: BackwardBranch, tol: float = 1e-9):
        """Worst one-step ratios at the root of ``b``: (max stable ratio, min unstable ratio).

        The bounds ask for stable <= lambda* and unstable >= 1/lambda*.
        """
        f = self.f
        sp0 = estimate_splitting(f, b, self.fwd)
        b1 = shift_forward(f, b)
        sp1 = estimate_splitting(f, b1, self.fwd)
        J = metric_jacobians(f, b.as_array()[:1])[0]
        worst_s, worst_u = 0.0, np.inf
        for i in range(sp0.dims[1]):
            v = sp0.es_frame[:, i]
            worst_s = max(worst_s, self.norm_metric(b1, J @ v, sp1) / self.norm_metric(b, v, sp0))
        for i in range(sp0.dims[0]):
            v = sp0.eu_frame[:, i]
            worst_u = min(worst_u, self.norm_metric(b1, J @ v, sp1) / self.norm_metric(b, v, sp0))
        return worst_s, worst_u

    def violations(self, branches: Sequence[BackwardBranch], tol: float = 1e-9) -> int:
        bad = 0
        for b in branches:
            s, u = self.one_step_check(b)
            if s > self.lambda_star * (1 + tol) or u < (1 - tol) / self.lambda_star:
                bad += 1
        return bad

    def equivalence_constant(self, n_vectors: int = 10_000, seed: int = 0) -> float:
        """K with 1/K <= ||v||_adapted / ||v|| <= K over random vectors at the samples."""
        rng = np.random.default_rng(seed)
        d = self.f.manifold.dimension
        per = max(1, n_vectors // max(1, len(self.samples)))
        lo, hi = np.inf, 0.0
        for b in self.samples:
            sp = estimate_splitting(self.f, b, self.fwd)
            for v in rng.standard_normal((per, d)):
                r = self.norm_metric(b, v, sp) / float(np.linalg.norm(v))
                lo, hi = min(lo, r), max(hi, r)
        return float(max(hi, 1.0 / lo))


def adapted_norm(f: Endomorphism, set_handle, lambda_star: float | None = None, m: int = 12, rate: float | None = None) -> AdaptedNorm:
    """Build the adapted norm on the set represented by sampled in-set branches.

    When ``lambda_star`` is omitted it defaults to the midpoint of (rate, 1),
    with ``rate`` estimated by :func:`verify_hyperbolic` if not given.
    """
    samples = list(set_handle)
    if lambda_star is None:
        if rate is None:
            rate = verify_hyperbolic(f, samples, horizon=m).lambda_
        lambda_star = 0.5 * (rate + 1.0)
    return AdaptedNorm(f, samples, lambda_star, m)

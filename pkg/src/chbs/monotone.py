"""Scalar calculus for the maximal monotone graphs of double-well potentials.

The potentials driving the phase dynamics split into a convex part, whose
subdifferential ``beta`` is a maximal monotone graph on the real line, and a
Lipschitz perturbation ``pi``.  Three prototype graphs are supported:

* ``polynomial``: beta(r) = r**3 with effective domain R (quartic well),
* ``logarithmic``: beta(r) = ln((1+r)/(1-r)) on (-1, 1),
* ``obstacle``: beta = subdifferential of the indicator of [-1, 1].

For each graph the module evaluates the resolvent (I + eps*beta)^(-1), the
Yosida approximation, the Moreau envelope of the convex primitive, and the
minimal section.  A :class:`GraphPair` couples a bulk graph with a boundary
graph whose regularization parameter is scaled by the coupling constant
``rho``; the scaled definitions make the pointwise domination bound
``|beta_eps| <= rho*|beta_bnd_eps| + c0`` carry over unchanged from the
unregularized graphs.

All operations are pure functions of immutable inputs, accept scalars or
numpy arrays, and are safe for concurrent use.  Extension point: a new graph
kind needs entries in the ``_BETA*`` dispatch tables below plus a bracket rule
in ``_resolvent_newton``; no other families are assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import xlogy

POLYNOMIAL = "polynomial"
LOGARITHMIC = "logarithmic"
OBSTACLE = "obstacle"

_KINDS = (POLYNOMIAL, LOGARITHMIC, OBSTACLE)

#: open-domain resolvent brackets are shrunk strictly inside the endpoints
_PAD = 1e-15

_RESIDUAL_TOL = 1e-15
_MAX_ITER = 200


@dataclass(frozen=True)
class GraphSpec:
    """A maximal monotone graph together with its Lipschitz perturbation.

    Parameters
    ----------
    kind : str
        One of ``polynomial``, ``logarithmic``, ``obstacle``.
    domain_lo, domain_hi : float
        Endpoints of the effective domain (may be ``+-inf``).
    pi : callable
        The Lipschitz perturbation, vectorized over numpy arrays.
    pi_lipschitz : float
        A Lipschitz constant for ``pi``.
    pi_primitive : callable
        An antiderivative of ``pi`` (normalization irrelevant; energies
        subtract its value at the conserved mean).
    pi_prime : callable, optional
        Derivative of ``pi``; used by fully implicit Jacobians.
    """

    kind: str
    domain_lo: float
    domain_hi: float
    pi: Callable = field(compare=False)
    pi_lipschitz: float = 0.0
    pi_primitive: Callable = field(default=None, compare=False)
    pi_prime: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if not self.domain_lo < 0.0 < self.domain_hi:
            raise ValueError("effective domain must contain 0 in its interior")
        if self.pi_lipschitz < 0.0:
            raise ValueError("pi_lipschitz must be nonnegative")

    def contains(self, r, closed=True):
        """Whether ``r`` lies in the effective domain (elementwise)."""
        arr = np.asarray(r, dtype=float)
        if self.kind == LOGARITHMIC and not closed:
            return (arr > self.domain_lo) & (arr < self.domain_hi)
        return (arr >= self.domain_lo) & (arr <= self.domain_hi)


def _linear_pi(slope):
    """Perturbation pi(r) = slope*r with its primitive and derivative."""
    slope = float(slope)

    def pi(r):
        return slope * np.asarray(r, dtype=float)

    def primitive(r):
        return 0.5 * slope * np.asarray(r, dtype=float) ** 2

    def prime(r):
        return np.full_like(np.asarray(r, dtype=float), slope)

    return pi, abs(slope), primitive, prime


def polynomial_graph(pi_slope=-1.0):
    """Cubic graph beta(r) = r**3 on R; default perturbation pi(r) = -r."""
    pi, lip, prim, prime = _linear_pi(pi_slope)
    return GraphSpec(POLYNOMIAL, -np.inf, np.inf, pi, lip, prim, prime)


def logarithmic_graph(c=1.0):
    """Logarithmic graph beta(r) = ln((1+r)/(1-r)) on (-1, 1).

    The perturbation is pi(r) = -2*c*r; ``c`` is the constant breaking the
    convexity of the logarithmic well.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    pi, lip, prim, prime = _linear_pi(-2.0 * c)
    return GraphSpec(LOGARITHMIC, -1.0, 1.0, pi, lip, prim, prime)


def obstacle_graph(pi_slope=-1.0):
    """Obstacle graph beta = subdifferential of the indicator of [-1, 1]."""
    pi, lip, prim, prime = _linear_pi(pi_slope)
    return GraphSpec(OBSTACLE, -1.0, 1.0, pi, lip, prim, prime)


# --- single-valued evaluations per kind ---------------------------------

def _beta_smooth(kind, r):
    if kind == POLYNOMIAL:
        return r ** 3
    # logarithmic, |r| < 1
    return np.log1p(r) - np.log1p(-r)


def _beta_prime_smooth(kind, r):
    if kind == POLYNOMIAL:
        return 3.0 * r ** 2
    return 1.0 / (1.0 + r) + 1.0 / (1.0 - r)


def beta_hat(g, r):
    """Convex primitive of the graph, +inf outside its closed domain."""
    arr = np.asarray(r, dtype=float)
    if g.kind == POLYNOMIAL:
        out = 0.25 * arr ** 4
    elif g.kind == LOGARITHMIC:
        inside = (arr >= -1.0) & (arr <= 1.0)
        safe = np.clip(arr, -1.0, 1.0)
        vals = xlogy(1.0 + safe, 1.0 + safe) + xlogy(1.0 - safe, 1.0 - safe)
        out = np.where(inside, vals, np.inf)
    else:  # obstacle: indicator of [-1, 1]
        inside = (arr >= -1.0) & (arr <= 1.0)
        out = np.where(inside, 0.0, np.inf)
    return float(out) if np.ndim(r) == 0 else out


def minimal_section(g, r):
    """Least-modulus element of beta(r); requires r in the effective domain.

    Single-valued graphs return beta(r).  The obstacle graph returns 0
    everywhere on [-1, 1], including the endpoints, where 0 is the element
    of smallest modulus of the vertical segments.
    """
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("minimal_section: input must be finite")
    if g.kind == OBSTACLE:
        if np.any((arr < -1.0) | (arr > 1.0)):
            raise ValueError("minimal_section: input outside the effective domain [-1, 1]")
        out = np.zeros_like(arr)
    elif g.kind == LOGARITHMIC:
        if np.any((arr <= -1.0) | (arr >= 1.0)):
            raise ValueError("minimal_section: input outside the effective domain (-1, 1)")
        out = _beta_smooth(LOGARITHMIC, arr)
    else:
        out = _beta_smooth(POLYNOMIAL, arr)
    return float(out) if np.ndim(r) == 0 else out


# --- resolvent, Yosida approximation, Moreau envelope --------------------

def _resolvent_newton(g, eps, r):
    """Safeguarded Newton for j + eps*beta(j) = r on a monotone bracket.

    The root lies between 0 and r because beta is monotone with beta(0) = 0;
    the bracket is intersected with the effective domain, shrunk strictly
    inside open endpoints.  Newton steps that leave the bracket fall back to
    bisection, so the iteration cannot fail for the supported kinds.
    """
    kind = g.kind
    if kind == POLYNOMIAL:
        with np.errstate(over="ignore"):
            mag = np.minimum(np.abs(r), np.cbrt(np.abs(r) / eps))
        lo = np.where(r < 0.0, -mag, 0.0)
        hi = np.where(r > 0.0, mag, 0.0)
    else:
        lo = np.maximum(g.domain_lo + _PAD, np.minimum(r, 0.0))
        hi = np.minimum(g.domain_hi - _PAD, np.maximum(r, 0.0))

    j = 0.5 * (lo + hi)
    tol = _RESIDUAL_TOL * np.maximum(1.0, np.abs(r))
    tiny = 4.0 * np.finfo(float).eps
    for _ in range(_MAX_ITER):
        with np.errstate(over="ignore", invalid="ignore"):
            f = j + eps * _beta_smooth(kind, j) - r
        hi = np.where(f > 0.0, j, hi)
        lo = np.where(f <= 0.0, j, lo)
        done = (np.abs(f) <= tol) | (hi - lo <= tiny * np.maximum(1.0, np.abs(j)))
        if done.all():
            break
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            cand = j - f / (1.0 + eps * _beta_prime_smooth(kind, j))
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        j = np.where(done, j, cand)
    return j


def resolvent(g, eps, r):
    """Resolvent (I + eps*beta)^(-1) applied elementwise.

    Parameters
    ----------
    g : GraphSpec
    eps : float
        Regularization parameter, strictly positive.
    r : scalar or ndarray

    Returns
    -------
    The unique j with j + eps*s = r for some s in beta(j).  For the obstacle
    graph the resolvent is the projection onto [-1, 1] in closed form.
    """
    eps = float(eps)
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("resolvent: input must be finite")
    if g.kind == OBSTACLE:
        out = np.clip(arr, -1.0, 1.0)
    else:
        out = _resolvent_newton(g, eps, arr)
    return float(out) if np.ndim(r) == 0 else out


def yosida(g, eps, r):
    """Yosida approximation (r - resolvent(g, eps, r)) / eps.

    Monotone nondecreasing in r and Lipschitz with constant 1/eps.
    """
    eps = float(eps)
    j = resolvent(g, eps, r)
    out = (np.asarray(r, dtype=float) - j) / eps
    return float(out) if np.ndim(r) == 0 else out


def yosida_prime(g, eps, r):
    """Derivative of the Yosida approximation, elementwise.

    Smooth kinds use (1 - J')/eps with J' = 1/(1 + eps*beta'(J)).  The
    obstacle graph is piecewise linear; at the kink points +-1 the
    subgradient surrogate 0 is returned (1/eps outside [-1, 1]).
    """
    eps = float(eps)
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    arr = np.asarray(r, dtype=float)
    if g.kind == OBSTACLE:
        out = np.where(np.abs(arr) <= 1.0, 0.0, 1.0 / eps)
    else:
        j = resolvent(g, eps, arr)
        bp = _beta_prime_smooth(g.kind, j)
        out = bp / (1.0 + eps * bp)
    return float(out) if np.ndim(r) == 0 else out


def envelope(g, eps, r):
    """Moreau envelope of the convex primitive.

    Evaluates |r - J|^2/(2*eps) + beta_hat(J) with J the resolvent.  The
    result is nonnegative, bounded above by beta_hat(r), and its derivative
    in r is the Yosida approximation.
    """
    eps = float(eps)
    j = resolvent(g, eps, r)
    arr = np.asarray(r, dtype=float)
    out = (arr - j) ** 2 / (2.0 * eps) + beta_hat(g, j)
    return float(out) if np.ndim(r) == 0 else out


# --- bulk/boundary pair ---------------------------------------------------

@dataclass(frozen=True)
class GraphPair:
    """Bulk and boundary graphs with the domination constants (rho, c0).

    The boundary graph must dominate the bulk graph in the sense
    ``|beta°(r)| <= rho*|beta_bnd°(r)| + c0`` on the boundary domain, which
    in particular requires the boundary domain to be contained in the bulk
    one.  The constants are user-supplied and validated by sampling; they are
    not derived symbolically.
    """

    bulk: GraphSpec
    boundary: GraphSpec
    rho: float = 1.0
    c0: float = 0.0

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ValueError("rho must be positive")
        if self.c0 < 0.0:
            raise ValueError("c0 must be nonnegative")
        self._validate_containment()
        self._validate_domination()

    def _validate_containment(self):
        bnd, blk = self.boundary, self.bulk
        if bnd.domain_lo < blk.domain_lo or bnd.domain_hi > blk.domain_hi:
            raise ValueError("boundary graph domain must be contained in the bulk one")
        # a closed boundary endpoint may not sit on an open bulk endpoint
        bulk_open = blk.kind == LOGARITHMIC
        bnd_closed = bnd.kind != LOGARITHMIC
        if bulk_open and bnd_closed:
            if bnd.domain_lo == blk.domain_lo or bnd.domain_hi == blk.domain_hi:
                raise ValueError("boundary graph domain must be contained in the bulk one")

    def _validate_domination(self):
        lo, hi = self.boundary.domain_lo, self.boundary.domain_hi
        if not np.isfinite(lo):
            lo = -10.0
        if not np.isfinite(hi):
            hi = 10.0
        if self.boundary.kind == LOGARITHMIC:
            # open endpoints carry no finite minimal section
            lo, hi = lo + 1e-9, hi - 1e-9
        samples = np.linspace(lo, hi, 2001)
        b = np.abs(minimal_section(self.bulk, samples))
        g = np.abs(minimal_section(self.boundary, samples))
        slack = self.rho * g + self.c0 - b
        worst = slack.min()
        if worst < -1e-12 * max(1.0, float(np.max(b))):
            r_bad = float(samples[int(np.argmin(slack))])
            raise ValueError(
                f"(rho, c0) = ({self.rho}, {self.c0}) do not dominate the bulk graph: "
                f"|beta°({r_bad:.6g})| exceeds rho*|beta_bnd°| + c0 by {-worst:.3e}")


def yosida_boundary(pair, eps, r):
    """Boundary Yosida approximation with effective parameter eps*rho."""
    return yosida(pair.boundary, eps * pair.rho, r)


def resolvent_boundary(pair, eps, r):
    """Boundary resolvent (I + eps*rho*beta_bnd)^(-1)."""
    return resolvent(pair.boundary, eps * pair.rho, r)


def yosida_boundary_prime(pair, eps, r):
    """Derivative of the boundary Yosida approximation."""
    return yosida_prime(pair.boundary, eps * pair.rho, r)


def envelope_boundary(pair, eps, r):
    """Moreau envelope of the boundary primitive at parameter eps*rho."""
    return envelope(pair.boundary, eps * pair.rho, r)


@dataclass(frozen=True)
class CompatibilityReport:
    """Outcome of sampling the regularized domination bound."""

    passed: bool
    worst_slack: float
    worst_r: float
    n_samples: int


def check_compatibility(pair, eps, samples):
    """Verify |beta_eps(r)| <= rho*|beta_bnd_eps(r)| + c0 at every sample.

    Report-only: returns the worst slack (nonnegative means the bound holds)
    and the sample attaining it.  An empty sample list passes vacuously.
    """
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0,1]")
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        return CompatibilityReport(True, np.inf, np.nan, 0)
    b = np.abs(yosida(pair.bulk, eps, arr))
    g = np.abs(yosida_boundary(pair, eps, arr))
    slack = pair.rho * g + pair.c0 - b
    k = int(np.argmin(slack))
    worst = float(slack[k])
    tol = 1e-9 * max(1.0, float(np.max(b)))
    return CompatibilityReport(worst >= -tol, worst, float(arr[k]), arr.size)

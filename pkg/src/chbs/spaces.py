"""Discrete product-space structure for bulk/boundary field pairs.

A :class:`FieldPair` holds one value per bulk node and one per boundary
chain node.  Pairs with independent components model square-integrable
data; pairs whose boundary equals the trace of the bulk model the coupled
energy space.  On zero-mean trace-consistent pairs the coupled stiffness
form induces the gradient norm, its Riesz map F, and the dual norm defined
through one solve with F; the mean constraint is enforced exactly by a
Lagrange multiplier in an augmented saddle system factorized once per
domain.

All operations are pure given an immutable domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError

_MEAN_TOL = 1e-10
_TRACE_TOL = 1e-12
_FINV_RTOL = 1e-10


@dataclass(eq=False)
class FieldPair:
    """A bulk nodal vector paired with a boundary-chain nodal vector."""

    bulk: np.ndarray
    boundary: np.ndarray
    domain: object

    def __post_init__(self):
        self.bulk = np.asarray(self.bulk, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=float)
        if self.bulk.shape != (self.domain.n_bulk,):
            raise ValueError(f"bulk component has shape {self.bulk.shape}, "
                             f"expected ({self.domain.n_bulk},)")
        if self.boundary.shape != (self.domain.n_boundary,):
            raise ValueError(f"boundary component has shape {self.boundary.shape}, "
                             f"expected ({self.domain.n_boundary},)")

    @classmethod
    def from_bulk(cls, dom, bulk_values):
        """Trace-consistent pair determined by its bulk values."""
        w = np.asarray(bulk_values, dtype=float)
        return cls(w, w[dom.boundary_chain], dom)

    @classmethod
    def constant(cls, dom, value):
        return cls.from_bulk(dom, np.full(dom.n_bulk, float(value)))

    @classmethod
    def zeros(cls, dom):
        return cls.from_bulk(dom, np.zeros(dom.n_bulk))

    def copy(self):
        return FieldPair(self.bulk.copy(), self.boundary.copy(), self.domain)

    def __add__(self, other):
        return FieldPair(self.bulk + other.bulk, self.boundary + other.boundary, self.domain)

    def __sub__(self, other):
        return FieldPair(self.bulk - other.bulk, self.boundary - other.boundary, self.domain)

    def __mul__(self, s):
        return FieldPair(self.bulk * s, self.boundary * s, self.domain)

    __rmul__ = __mul__


@dataclass(eq=False)
class DualPair:
    """Functional on field pairs, stored as raw coefficient vectors.

    Acts by ``pairing(ell, z) = ell.bulk @ z.bulk + ell.boundary @ z.boundary``;
    no quadrature weight is applied to functional coefficients.
    """

    bulk: np.ndarray
    boundary: np.ndarray
    domain: object


def is_trace_consistent(z, tol=_TRACE_TOL):
    """Whether the boundary component equals the trace of the bulk one."""
    scale = 1.0 + float(np.max(np.abs(z.bulk), initial=0.0))
    gap = np.max(np.abs(z.boundary - z.bulk[z.domain.boundary_chain]), initial=0.0)
    return gap <= tol * scale


def _require_trace_consistent(z, what):
    if not is_trace_consistent(z):
        raise ValueError(f"{what}: pair is not trace-consistent")


def inner_H(z, w):
    """Combined square-integrable inner product with lumped masses."""
    dom = z.domain
    return float(z.bulk @ (dom.M_bulk * w.bulk) + z.boundary @ (dom.M_surf * w.boundary))


def form_a(z, w):
    """Coupled stiffness form: bulk gradients plus tangential gradients."""
    dom = z.domain
    return float(z.bulk @ (dom.K_bulk @ w.bulk) + z.boundary @ (dom.K_surf @ w.boundary))


def inner_V(z, w):
    """Full energy inner product, inner_H + form_a."""
    return inner_H(z, w) + form_a(z, w)


def mean(z):
    """Combined mean value (bulk integral + boundary integral) / total measure."""
    dom = z.domain
    return float(dom.M_bulk @ z.bulk + dom.M_surf @ z.boundary) / dom.total_measure


def project_zero_mean(z):
    """Remove the combined mean from both components."""
    m = mean(z)
    return FieldPair(z.bulk - m, z.boundary - m, z.domain)


def as_functional(z):
    """Embed a field pair as the functional (z, .)_H."""
    dom = z.domain
    return DualPair(dom.M_bulk * z.bulk, dom.M_surf * z.boundary, dom)


def pairing(ell, z):
    """Duality pairing between a functional and a field pair."""
    return float(ell.bulk @ z.bulk + ell.boundary @ z.boundary)


def _collapse(ell):
    """Coefficients of a functional restricted to trace-consistent pairs."""
    dom = ell.domain
    out = ell.bulk.copy()
    out[dom.boundary_chain] += ell.boundary
    return out


def apply_F(z):
    """Riesz image of a zero-mean trace-consistent pair under the a-form.

    Returns the functional a(z, .); pairing it with z gives the squared
    gradient norm.
    """
    _require_trace_consistent(z, "apply_F")
    if abs(mean(z)) > _MEAN_TOL * (1.0 + float(np.max(np.abs(z.bulk), initial=0.0))):
        raise ValueError("apply_F: pair must have zero combined mean")
    dom = z.domain
    return DualPair(dom.K_bulk @ z.bulk, dom.K_surf @ z.boundary, dom)


def _saddle_solve(dom, rhs_collapsed):
    """Solve the mean-constrained coupled-stiffness system."""
    rhs = np.concatenate([rhs_collapsed, [0.0]])
    sol = dom.saddle_lu.solve(rhs)
    w = sol[:-1]
    lam = sol[-1]
    resid = dom.coupled_stiffness @ w + lam * dom.combined_mass - rhs_collapsed
    scale = max(float(np.linalg.norm(rhs_collapsed)), 1e-300)
    if float(np.linalg.norm(resid)) > _FINV_RTOL * max(scale, 1.0):
        raise NumericalError("mean-constrained stiffness solve lost accuracy")
    return w


def solve_F_inverse(ell):
    """Invert the Riesz map: the zero-mean pair w with a(w, .) = ell.

    The functional must annihilate constants up to a small tolerance; the
    mean constraint is enforced through a Lagrange multiplier so the result
    has exactly zero combined mean up to rounding.
    """
    dom = ell.domain
    total = float(np.sum(ell.bulk) + np.sum(ell.boundary))
    scale = float(np.sum(np.abs(ell.bulk)) + np.sum(np.abs(ell.boundary)))
    if abs(total) > 1e-8 * max(1.0, scale):
        raise ValueError("solve_F_inverse: functional does not annihilate constants")
    w = _saddle_solve(dom, _collapse(ell))
    return FieldPair.from_bulk(dom, w)


def norm_V0(z):
    """Gradient seminorm sqrt(a(z, z))."""
    return float(np.sqrt(max(form_a(z, z), 0.0)))


def _v0star_sq_collapsed(dom, ell_collapsed):
    w = _saddle_solve(dom, ell_collapsed)
    return max(float(ell_collapsed @ w), 0.0)


def norm_V0_star(ell):
    """Dual norm sqrt(<ell, F^(-1) ell>) on zero-mean functionals."""
    return float(np.sqrt(_v0star_sq_collapsed(ell.domain, _collapse(ell))))


def norm_V_star(ell):
    """Dual norm of a functional over the full trace-consistent space."""
    dom = ell.domain
    c = _collapse(ell)
    return float(np.sqrt(max(c @ dom.vnorm_lu.solve(c), 0.0)))


def poincare_constant(dom):
    """Largest c with c*|z|_V^2 <= a(z, z) on zero-mean trace-consistent pairs.

    Computed as the smallest generalized eigenvalue of the coupled stiffness
    against the full V-norm matrix, both projected onto the zero-mean
    subspace in bulk coordinates.
    """
    A = dom.coupled_stiffness.toarray()
    B = np.diag(dom.combined_mass) + A
    Q = scipy.linalg.null_space(dom.combined_mass[None, :])
    try:
        vals = scipy.linalg.eigh(Q.T @ A @ Q, Q.T @ B @ Q, eigvals_only=True,
                                 subset_by_index=[0, 0])
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"generalized eigensolve failed: {exc}") from exc
    cp = float(vals[0])
    if not cp > 0.0:
        raise NumericalError(f"coercivity constant came out nonpositive: {cp}")
    return cp


def subgrad_phi(z):
    """Weak realization of the coupled Laplacian pair on zero-mean fields.

    Returns the H-representer of a(z, .): the mass-weighted image of the
    stiffness application with its combined mean removed, so that
    inner_H(subgrad_phi(z), w) = a(z, w) for every zero-mean
    trace-consistent w.
    """
    _require_trace_consistent(z, "subgrad_phi")
    if abs(mean(z)) > _MEAN_TOL * (1.0 + float(np.max(np.abs(z.bulk), initial=0.0))):
        raise ValueError("subgrad_phi: pair must have zero combined mean")
    dom = z.domain
    out = FieldPair((dom.K_bulk @ z.bulk) / dom.M_bulk,
                    (dom.K_surf @ z.boundary) / dom.M_surf, dom)
    return project_zero_mean(out)

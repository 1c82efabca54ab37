"""Backward-Euler time stepping for the regularized bulk/boundary flow.

Each step solves the coupled nodal system for the zero-mean order parameter
``v`` and the chemical potential ``mu`` (both trace-consistent, so the
unknowns are two bulk-sized vectors)

    Mc (v' - v)/tau + Ac mu' = 0,
    Mc mu' = eps Mc (v' - v)/tau + Ac v' + N(u') + P(u*) - F,

where Mc and Ac are the combined lumped mass and coupled stiffness in bulk
coordinates, N collects the mass-weighted nodewise Yosida terms (bulk graph
in the bulk, boundary graph with parameter eps*rho on the chain), P the
perturbation terms, and F the load vector of the forcing pair sampled at the
new time.  Under the default convex splitting the perturbation argument u*
is the old state, which makes the discrete free energy nonincreasing for
zero forcing; the fully implicit variant evaluates it at the new state.

Testing the first equation with the constant pair shows the combined mean of
``v`` is conserved algebraically: the Newton updates stay exactly in the
zero-mean subspace up to linear-solver rounding.  The solver is a damped
Newton iteration on the monolithic system with a Picard fallback for the
kinked obstacle graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .domain import integrate_bulk, integrate_surf
from .errors import CompatibilityError, ConfigError, StepError
from .monotone import (GraphPair, beta_hat, envelope, envelope_boundary,
                       yosida, yosida_boundary, yosida_boundary_prime,
                       yosida_prime)
from .spaces import (FieldPair, as_functional, form_a, inner_V, mean,
                     norm_V0, norm_V0_star, project_zero_mean, subgrad_phi,
                     _saddle_solve, is_trace_consistent)

CONVEX_SPLIT = "convex_split"
FULLY_IMPLICIT = "fully_implicit"

_PICARD_BUDGET_FACTOR = 20


@dataclass(frozen=True)
class SchemeConfig:
    """Parameters of one regularized backward-Euler run.

    ``m0`` may be left unset, in which case the conserved mean is taken from
    the initial data; when set it is validated against the initial data.
    ``eps_time_zero`` drops the eps-weighted time-derivative term from the
    potential equation (diagnostic only, fully implicit splitting required);
    the Yosida parameter stays at ``eps``.
    """

    eps: float
    tau: float
    t_end: float
    graphs: GraphPair
    m0: Optional[float] = None
    newton_tol: float = 1e-10
    newton_max: int = 50
    splitting: str = CONVEX_SPLIT
    eps_time_zero: bool = False

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ConfigError("eps must lie in (0,1]")
        if not self.tau > 0.0:
            raise ConfigError("tau must be positive")
        if self.t_end < 0.0:
            raise ConfigError("t_end must be nonnegative")
        if self.splitting not in (CONVEX_SPLIT, FULLY_IMPLICIT):
            raise ConfigError(f"unknown splitting {self.splitting!r}")
        if self.eps_time_zero and self.splitting != FULLY_IMPLICIT:
            raise ConfigError("eps_time_zero is a fully-implicit diagnostic mode")
        if not self.newton_tol > 0.0:
            raise ConfigError("newton_tol must be positive")
        if self.newton_max < 1:
            raise ConfigError("newton_max must be at least 1")
        if self.m0 is not None:
            g = self.graphs.boundary
            if not g.domain_lo < self.m0 < g.domain_hi:
                raise ConfigError("m0 must lie strictly inside the boundary graph domain")


@dataclass(frozen=True)
class SchemeState:
    """One time level: zero-mean order parameter, potential, Yosida values.

    ``xi`` holds the nodewise Yosida evaluations of u = v + m0 (bulk graph in
    the bulk slot, boundary graph with parameter eps*rho in the boundary
    slot).  ``m0`` is the conserved combined mean of the run.
    """

    v: FieldPair
    mu: FieldPair
    xi: FieldPair
    omega: float
    t: float
    step_index: int
    m0: float
    newton_iters: int = 0


@dataclass(frozen=True)
class MonitorRecord:
    """Per-step scalars: conserved mass, energy, and the uniform-bound norms."""

    t: float
    total_mass: float
    energy: float
    norm_v_V0: float
    norm_v_V0star: float
    norm_mu_V: float
    l1_xi_bulk: float
    l1_xi_surf: float
    envelope_integral_bulk: float
    envelope_integral_surf: float
    omega: float
    newton_iters: int

    @classmethod
    def fields(cls):
        return list(cls.__dataclass_fields__)


@dataclass
class Trajectory:
    """A completed (or aborted) run: states, records, and forcing samples."""

    config: SchemeConfig
    m0: float
    states: List[SchemeState]
    records: List[MonitorRecord]
    f_hist: List[FieldPair] = field(default_factory=list)
    aborted: bool = False
    error: Optional[str] = None

    @property
    def times(self):
        return np.array([s.t for s in self.states])


# --- nodewise assembly helpers -------------------------------------------

def _load_vector(dom, f):
    """Mass-weighted load of a forcing pair in bulk coordinates."""
    if f is None:
        return np.zeros(dom.n_bulk)
    out = dom.M_bulk * f.bulk
    out[dom.boundary_chain] += dom.M_surf * f.boundary
    return out


def _nonlinear_vector(dom, pair, eps, u_bulk):
    """Yosida values and their mass-weighted collapse at bulk values u."""
    u_bnd = u_bulk[dom.boundary_chain]
    xi_b = yosida(pair.bulk, eps, u_bulk)
    xi_g = yosida_boundary(pair, eps, u_bnd)
    out = dom.M_bulk * xi_b
    out[dom.boundary_chain] += dom.M_surf * xi_g
    return xi_b, xi_g, out


def _perturbation_vector(dom, pair, u_bulk):
    u_bnd = u_bulk[dom.boundary_chain]
    out = dom.M_bulk * pair.bulk.pi(u_bulk)
    out[dom.boundary_chain] += dom.M_surf * pair.boundary.pi(u_bnd)
    return out


def _nonlinear_jacobian_diag(dom, pair, eps, u_bulk):
    d = dom.M_bulk * yosida_prime(pair.bulk, eps, u_bulk)
    d = d.copy()
    d[dom.boundary_chain] += dom.M_surf * yosida_boundary_prime(
        pair, eps, u_bulk[dom.boundary_chain])
    return d


def _pi_prime(g, u):
    if g.pi_prime is not None:
        return g.pi_prime(u)
    h = 1e-6
    return (g.pi(u + h) - g.pi(u - h)) / (2.0 * h)


def _perturbation_jacobian_diag(dom, pair, u_bulk):
    d = dom.M_bulk * _pi_prime(pair.bulk, u_bulk)
    d = d.copy()
    d[dom.boundary_chain] += dom.M_surf * _pi_prime(
        pair.boundary, u_bulk[dom.boundary_chain])
    return d


def implicit_block(state, config):
    """The v-block of the step Jacobian, eps*Mc/tau + Ac + dN(u).

    Positive definite for eps > 0; with the eps term dropped it is only
    positive semidefinite (constants may enter the kernel where the Yosida
    slope vanishes).
    """
    dom = state.v.domain
    eps_t = 0.0 if config.eps_time_zero else config.eps
    u_b = state.v.bulk + state.m0
    d = _nonlinear_jacobian_diag(dom, config.graphs, config.eps, u_b)
    return (sp.diags(eps_t * dom.combined_mass / config.tau + d)
            + dom.coupled_stiffness).tocsr()


# --- energy ----------------------------------------------------------------

def energy(v, m0, config):
    """Discrete free energy of the state u = v + m0.

    Gradient part plus lumped Moreau-envelope integrals (parameter eps in
    the bulk, eps*rho on the boundary) plus the perturbation primitives
    normalized to vanish at m0.
    """
    dom = v.domain
    pair = config.graphs
    eps = config.eps
    u_b = v.bulk + m0
    u_g = v.boundary + m0
    e = 0.5 * form_a(v, v)
    e += float(dom.M_bulk @ envelope(pair.bulk, eps, u_b))
    e += float(dom.M_surf @ envelope_boundary(pair, eps, u_g))
    e += float(dom.M_bulk @ (pair.bulk.pi_primitive(u_b) - pair.bulk.pi_primitive(m0)))
    e += float(dom.M_surf @ (pair.boundary.pi_primitive(u_g) - pair.boundary.pi_primitive(m0)))
    return e


def monitor_record(state, config):
    dom = state.v.domain
    pair = config.graphs
    u_b = state.v.bulk + state.m0
    u_g = state.v.boundary + state.m0
    total_mass = integrate_bulk(dom, u_b) + integrate_surf(dom, u_g)
    return MonitorRecord(
        t=state.t,
        total_mass=total_mass,
        energy=energy(state.v, state.m0, config),
        norm_v_V0=norm_V0(state.v),
        norm_v_V0star=norm_V0_star(as_functional(state.v)),
        norm_mu_V=float(np.sqrt(max(inner_V(state.mu, state.mu), 0.0))),
        l1_xi_bulk=float(dom.M_bulk @ np.abs(state.xi.bulk)),
        l1_xi_surf=float(dom.M_surf @ np.abs(state.xi.boundary)),
        envelope_integral_bulk=float(dom.M_bulk @ envelope(pair.bulk, config.eps, u_b)),
        envelope_integral_surf=float(dom.M_surf @ envelope_boundary(pair, config.eps, u_g)),
        omega=state.omega,
        newton_iters=state.newton_iters,
    )


# --- initialization ---------------------------------------------------------

def initialize(config, u0, forcing_at_0=None):
    """Build the initial state from trace-consistent initial data.

    The conserved mean is recorded from the data; the potential, Yosida pair
    and mean offset are evaluated with a zero time-derivative surrogate.
    """
    dom = u0.domain
    pair = config.graphs
    if not is_trace_consistent(u0):
        raise ValueError("initialize: initial data must be trace-consistent")
    bad = ~np.isfinite(beta_hat(pair.bulk, u0.bulk))
    if bad.any():
        node = int(np.argmax(bad))
        raise CompatibilityError(
            f"initial value {u0.bulk[node]!r} at bulk node {node} lies outside "
            f"the effective domain of the bulk graph")
    bad = ~np.isfinite(beta_hat(pair.boundary, u0.boundary))
    if bad.any():
        node = int(np.argmax(bad))
        raise CompatibilityError(
            f"initial value {u0.boundary[node]!r} at boundary node {node} lies "
            f"outside the effective domain of the boundary graph")
    m0 = mean(u0)
    if config.m0 is not None and abs(m0 - config.m0) > 1e-12:
        raise ConfigError(f"initial data has mean {m0!r}, config declares {config.m0!r}")
    if not pair.boundary.domain_lo < m0 < pair.boundary.domain_hi:
        raise CompatibilityError(
            f"conserved mean {m0!r} is not interior to the boundary graph domain")

    v0 = project_zero_mean(u0)
    xi_b = yosida(pair.bulk, config.eps, u0.bulk)
    xi_g = yosida_boundary(pair, config.eps, u0.boundary)
    xi = FieldPair(xi_b, xi_g, dom)
    f0 = forcing_at_0 if forcing_at_0 is not None else FieldPair.zeros(dom)
    rest = FieldPair(xi_b + pair.bulk.pi(u0.bulk) - f0.bulk,
                     xi_g + pair.boundary.pi(u0.boundary) - f0.boundary, dom)
    mu0 = subgrad_phi(v0) + rest
    return SchemeState(v=v0, mu=mu0, xi=xi, omega=mean(rest), t=0.0,
                       step_index=0, m0=m0)


# --- the nonlinear step -----------------------------------------------------

def _residual_norms(dom, R1, R2):
    r1 = math.sqrt(max(float(R1 @ _saddle_solve(dom, R1)), 0.0))
    r2 = math.sqrt(float(R2 @ (R2 / dom.combined_mass)))
    return r1, r2


def _dual_norm(dom, vec):
    return math.sqrt(max(float(vec @ _saddle_solve(dom, vec)), 0.0))


def _h_norm(dom, vec):
    return math.sqrt(float(vec @ (vec / dom.combined_mass)))


class _StepSystem:
    """Residual/Jacobian assembly for one step in bulk coordinates."""

    def __init__(self, dom, config, m0, w_prev, f_vec):
        self.dom = dom
        self.cfg = config
        self.m0 = m0
        self.w_prev = w_prev
        self.f_vec = f_vec
        self.eps_t = 0.0 if config.eps_time_zero else config.eps
        self.implicit_pi = config.splitting == FULLY_IMPLICIT
        if self.implicit_pi:
            self.pi_vec_prev = None
        else:
            self.pi_vec_prev = _perturbation_vector(dom, config.graphs, w_prev + m0)

    def residual(self, w, mu):
        dom, cfg = self.dom, self.cfg
        gc = dom.combined_mass
        dw = (w - self.w_prev) / cfg.tau
        R1 = gc * dw + dom.coupled_stiffness @ mu
        u_b = w + self.m0
        xi_b, xi_g, nvec = _nonlinear_vector(dom, cfg.graphs, cfg.eps, u_b)
        pivec = (_perturbation_vector(dom, cfg.graphs, u_b)
                 if self.implicit_pi else self.pi_vec_prev)
        R2 = gc * mu - (self.eps_t * gc * dw + dom.coupled_stiffness @ w
                        + nvec + pivec - self.f_vec)
        return R1, R2, (xi_b, xi_g)

    def scales(self, w, mu):
        # relative-residual scales from the individual term norms, capped at
        # 10 so accepted steps always satisfy the documented 10*newton_tol
        # bound on the weak-residual norms
        dom, cfg = self.dom, self.cfg
        gc = dom.combined_mass
        dw = (w - self.w_prev) / cfg.tau
        u_b = w + self.m0
        _, _, nvec = _nonlinear_vector(dom, cfg.graphs, cfg.eps, u_b)
        pivec = (_perturbation_vector(dom, cfg.graphs, u_b)
                 if self.implicit_pi else self.pi_vec_prev)
        s1 = max(1.0, _dual_norm(dom, gc * dw),
                 _dual_norm(dom, dom.coupled_stiffness @ mu))
        s2 = max(1.0, _h_norm(dom, gc * mu),
                 _h_norm(dom, dom.coupled_stiffness @ w),
                 _h_norm(dom, nvec), _h_norm(dom, pivec - self.f_vec),
                 _h_norm(dom, self.eps_t * gc * dw))
        return min(s1, 10.0), min(s2, 10.0)

    def jacobian(self, w):
        dom, cfg = self.dom, self.cfg
        gc = dom.combined_mass
        u_b = w + self.m0
        d = _nonlinear_jacobian_diag(dom, cfg.graphs, cfg.eps, u_b)
        if self.implicit_pi:
            d = d + _perturbation_jacobian_diag(dom, cfg.graphs, u_b)
        block = sp.diags(self.eps_t * gc / cfg.tau) + dom.coupled_stiffness + sp.diags(d)
        return sp.bmat([[sp.diags(gc / cfg.tau), dom.coupled_stiffness],
                        [-block, sp.diags(gc)]], format="csc")

    def picard_matrix(self):
        dom, cfg = self.dom, self.cfg
        gc = dom.combined_mass
        block = sp.diags(self.eps_t * gc / cfg.tau) + dom.coupled_stiffness
        return sp.bmat([[sp.diags(gc / cfg.tau), dom.coupled_stiffness],
                        [-block, sp.diags(gc)]], format="csc")


def _solve_step(system, w0, mu0):
    """Damped Newton with Picard fallback; returns (w, mu, iters, r1, r2)."""
    dom, cfg = system.dom, system.cfg
    nb = dom.n_bulk
    tol = cfg.newton_tol
    w, mu = w0.copy(), mu0.copy()
    iters = 0

    R1, R2, _ = system.residual(w, mu)
    r1, r2 = _residual_norms(dom, R1, R2)
    merit = math.hypot(r1, r2)
    for _ in range(cfg.newton_max):
        s1, s2 = system.scales(w, mu)
        if r1 <= tol * s1 and r2 <= tol * s2:
            return w, mu, iters, r1, r2
        lu = splu(system.jacobian(w))
        delta = lu.solve(np.concatenate([-R1, -R2]))
        dw, dmu = delta[:nb], delta[nb:]
        lam = 1.0
        accepted = False
        for _halving in range(6):
            w_try, mu_try = w + lam * dw, mu + lam * dmu
            R1t, R2t, _ = system.residual(w_try, mu_try)
            r1t, r2t = _residual_norms(dom, R1t, R2t)
            merit_try = math.hypot(r1t, r2t)
            if merit_try <= (1.0 - 1e-4 * lam) * merit or merit_try <= tol:
                accepted = True
                break
            lam *= 0.5
        iters += 1
        if not accepted:
            return _solve_picard(system, w, mu, iters)
        w, mu, R1, R2, r1, r2, merit = w_try, mu_try, R1t, R2t, r1t, r2t, merit_try
    s1, s2 = system.scales(w, mu)
    if r1 <= tol * s1 and r2 <= tol * s2:
        return w, mu, iters, r1, r2
    raise StepError(f"Newton did not converge in {cfg.newton_max} iterations "
                    f"(residuals {r1:.3e}, {r2:.3e})", residual=(r1, r2))


def _solve_picard(system, w, mu, iters):
    """Frozen-nonlinearity fixed-point iteration on the linear step system."""
    dom, cfg = system.dom, system.cfg
    gc = dom.combined_mass
    lu = splu(system.picard_matrix())
    tol = cfg.newton_tol
    budget = _PICARD_BUDGET_FACTOR * cfg.newton_max
    r1 = r2 = math.inf
    for _ in range(budget):
        u_b = w + system.m0
        _, _, nvec = _nonlinear_vector(dom, cfg.graphs, cfg.eps, u_b)
        pivec = (_perturbation_vector(dom, cfg.graphs, u_b)
                 if system.implicit_pi else system.pi_vec_prev)
        rhs1 = gc * system.w_prev / cfg.tau
        rhs2 = nvec + pivec - system.f_vec - system.eps_t * gc * system.w_prev / cfg.tau
        sol = lu.solve(np.concatenate([rhs1, rhs2]))
        w, mu = sol[:dom.n_bulk], sol[dom.n_bulk:]
        iters += 1
        R1, R2, _ = system.residual(w, mu)
        r1, r2 = _residual_norms(dom, R1, R2)
        s1, s2 = system.scales(w, mu)
        if r1 <= tol * s1 and r2 <= tol * s2:
            return w, mu, iters, r1, r2
    raise StepError(f"Picard fallback did not converge in {budget} iterations "
                    f"(residuals {r1:.3e}, {r2:.3e})", residual=(r1, r2))


def step(state, config, f_next, f_curr=None):
    """Advance one time level.

    ``f_next`` is the forcing pair at the target time; backward Euler samples
    the forcing there.  ``f_curr`` is accepted for splittings that sample the
    forcing explicitly and is currently unused.

    Returns the new state; raises StepError if the nonlinear solve fails.
    """
    dom = state.v.domain
    pair = config.graphs
    f_vec = _load_vector(dom, f_next)
    system = _StepSystem(dom, config, state.m0, state.v.bulk, f_vec)
    w, mu, iters, _, _ = _solve_step(system, state.v.bulk, state.mu.bulk)

    u_b = w + state.m0
    xi_b = yosida(pair.bulk, config.eps, u_b)
    xi_g = yosida_boundary(pair, config.eps, u_b[dom.boundary_chain])
    u_star = (u_b if config.splitting == FULLY_IMPLICIT
              else state.v.bulk + state.m0)
    fz = f_next if f_next is not None else FieldPair.zeros(dom)
    omega_pair = FieldPair(xi_b + pair.bulk.pi(u_star) - fz.bulk,
                           xi_g + pair.boundary.pi(u_star[dom.boundary_chain]) - fz.boundary,
                           dom)
    return SchemeState(v=FieldPair.from_bulk(dom, w),
                       mu=FieldPair.from_bulk(dom, mu),
                       xi=FieldPair(xi_b, xi_g, dom),
                       omega=mean(omega_pair),
                       t=state.t + config.tau,
                       step_index=state.step_index + 1,
                       m0=state.m0,
                       newton_iters=iters)


def weak_residuals(state_prev, state_next, config, f_next):
    """Residual norms of the two weak equations across one step.

    Returns the dual norm (over zero-mean tests) of the conservation-equation
    residual and the combined square-integrable dual norm of the
    potential-equation residual.
    """
    dom = state_prev.v.domain
    f_vec = _load_vector(dom, f_next)
    system = _StepSystem(dom, config, state_prev.m0, state_prev.v.bulk, f_vec)
    R1, R2, _ = system.residual(state_next.v.bulk, state_next.mu.bulk)
    return _residual_norms(dom, R1, R2)


def run(config, u0, forcing=None):
    """Integrate from t = 0 to t_end, collecting states and monitor records.

    ``forcing`` is an optional callable t -> FieldPair.  Step failures abort
    the run and return the partial trajectory flagged.
    """
    dom = u0.domain

    def f_at(t):
        return forcing(t) if forcing is not None else FieldPair.zeros(dom)

    state = initialize(config, u0, forcing_at_0=f_at(0.0))
    traj = Trajectory(config=config, m0=state.m0, states=[state],
                      records=[monitor_record(state, config)])
    nsteps = max(0, int(math.ceil(config.t_end / config.tau - 1e-9)))
    for k in range(1, nsteps + 1):
        f_next = f_at(k * config.tau)
        f_curr = f_at((k - 1) * config.tau)
        try:
            state = step(state, config, f_next, f_curr)
        except StepError as exc:
            traj.aborted = True
            traj.error = str(exc)
            break
        traj.f_hist.append(f_next)
        traj.states.append(state)
        traj.records.append(monitor_record(state, config))
    return traj

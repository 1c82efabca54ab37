"""Experiment harness: conservation, stability, and structure checks.

Turns the analytical guarantees of the model into desk-scale experiments on
completed runs: the two-trajectory continuous-dependence ratio and its
stability under time refinement, the vanishing-regularization Cauchy study
with its uniform-bound table, and the structural checks on a discrete
domain (coercivity constant, sampled coercivity inequality, subgradient
adjointness, projection identity).

Every report is a pure function of its input runs; experiment members may
fan out across threads (capped by the CHBS_THREADS environment variable)
and are aggregated in index order, so repeated invocations with identical
inputs give identical reports.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
import numpy as np

from .errors import ConfigError
from .scheme import MonitorRecord, run  # re-exported record type
from .spaces import (FieldPair, as_functional, form_a, inner_H, inner_V, mean,
                     norm_V0_star, norm_V_star, poincare_constant,
                     project_zero_mean, subgrad_phi)

__all__ = [
    "MonitorRecord", "ContDepReport", "EpsStudyReport", "AprioriTable",
    "AppendixReport", "continuous_dependence_experiment",
    "vanishing_eps_study", "apriori_bound_table", "appendix_checks",
]

_RHS_FLOOR = 1e-30


def _max_workers(explicit=None):
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("CHBS_THREADS")
    return max(1, int(env)) if env else 1


def _run_many(jobs, max_workers):
    """Run (config, u0, forcing) jobs, results in submission order."""
    if max_workers <= 1 or len(jobs) <= 1:
        return [run(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(run, *job) for job in jobs]
        return [f.result() for f in futures]


# --- continuous dependence --------------------------------------------------

@dataclass(frozen=True)
class ContDepReport:
    """Observed two-run stability ratios across a time-step sweep."""

    taus: tuple
    sup_ratios: tuple
    degenerate: bool
    aborted: bool
    variation: float

    @property
    def sup_ratio(self):
        return self.sup_ratios[0]

    def summary_lines(self):
        lines = []
        if self.degenerate:
            lines.append("ratio: 0 (degenerate)")
        else:
            lines.append(f"ratio: {self.sup_ratio!r}")
            for tau, ratio in zip(self.taus, self.sup_ratios):
                lines.append(f"tau {tau!r}: sup ratio {ratio!r}")
            lines.append(f"variation across tau: {self.variation!r}")
        lines.append("aborted: " + ("yes" if self.aborted else "no"))
        return lines


def _ratio_curve(traj1, traj2):
    """sup_t of LHS/RHS for one pair of aligned trajectories."""
    tau = traj1.config.tau
    d0 = traj1.states[0].v - traj2.states[0].v
    rhs0 = norm_V0_star(as_functional(d0)) ** 2
    lhs_acc = 0.0
    rhs_acc = 0.0
    sup = (norm_V0_star(as_functional(d0)) ** 2) / max(rhs0, _RHS_FLOOR)
    if rhs0 <= _RHS_FLOOR:
        sup = 0.0
    nsteps = min(len(traj1.states), len(traj2.states)) - 1
    rhs_final = rhs0
    for k in range(1, nsteps + 1):
        diff = traj1.states[k].v - traj2.states[k].v
        lhs_acc += tau * form_a(diff, diff)
        lhs = norm_V0_star(as_functional(diff)) ** 2 + lhs_acc
        fdiff = traj1.f_hist[k - 1] - traj2.f_hist[k - 1]
        rhs_acc += tau * norm_V_star(as_functional(fdiff)) ** 2
        rhs = rhs0 + rhs_acc
        rhs_final = rhs
        if rhs <= _RHS_FLOOR:
            continue
        sup = max(sup, lhs / rhs)
    return sup, rhs_final <= _RHS_FLOOR


def continuous_dependence_experiment(config, data1, data2, tau_levels=3,
                                     max_workers=None):
    """Two-trajectory stability experiment with a time-step refinement sweep.

    ``data1`` and ``data2`` are (initial pair, forcing callable or None)
    tuples sharing the same domain, graphs and conserved mean.  For each tau
    in {tau, tau/2, tau/4} both trajectories are run and the supremum over
    time of

        (|v1 - v2|_{V0*}^2 + sum tau |v1 - v2|_{V0}^2)
        / (|v1(0) - v2(0)|_{V0*}^2 + sum tau |f1 - f2|_{V*}^2)

    is recorded, the denominator floored at 1e-30.
    """
    u01, f1 = data1
    u02, f2 = data2
    if abs(mean(u01) - mean(u02)) > 1e-12:
        raise ConfigError("continuous dependence compares runs within one "
                          "conserved-mean class; the initial means differ")
    taus = tuple(config.tau / 2 ** k for k in range(tau_levels))
    jobs = []
    for tau in taus:
        cfg = replace(config, tau=tau)
        jobs.append((cfg, u01, f1))
        jobs.append((cfg, u02, f2))
    trajs = _run_many(jobs, _max_workers(max_workers))
    aborted = any(t.aborted for t in trajs)
    sups = []
    degenerate = False
    for i in range(len(taus)):
        sup, degen = _ratio_curve(trajs[2 * i], trajs[2 * i + 1])
        sups.append(sup)
        if i == 0:
            degenerate = degen
    finite = [s for s in sups if s > 0.0]
    if degenerate or not finite:
        variation = 0.0
    else:
        variation = (max(finite) - min(finite)) / min(finite)
    return ContDepReport(taus=taus, sup_ratios=tuple(sups),
                         degenerate=degenerate, aborted=aborted,
                         variation=variation)


# --- uniform-bound table ------------------------------------------------------

_TABLE_COLUMNS = [
    "eps",
    "sqrt_eps_max_v_H0",
    "max_v_V0star",
    "l2_v_V0",
    "l1l1_xi_bulk",
    "l1l1_xi_surf",
    "l2l1_xi_bulk",
    "l2l1_xi_surf",
    "l2h_xi_bulk",
    "l2h_xi_surf",
    "max_env_bulk",
    "max_env_surf",
    "l2_omega",
    "l2_mu_V",
    "l2_dq_V0star",
    "sqrt_eps_l2_dq_H0",
]


@dataclass(frozen=True)
class AprioriTable:
    """Discrete-in-time norms of the uniformly bounded quantities, per run."""

    columns: tuple
    rows: tuple  # tuple of dicts keyed by column name

    def column(self, name):
        return np.array([row[name] for row in self.rows])

    def bounded(self, ratio_cap=10.0, zero_tol=1e-14):
        """Whether every column stays within a common envelope across rows."""
        verdict = {}
        for name in self.columns:
            if name == "eps":
                continue
            vals = self.column(name)
            top = float(vals.max())
            if top <= zero_tol:
                verdict[name] = True
                continue
            bottom = float(vals.min())
            verdict[name] = bottom > 0.0 and top / bottom <= ratio_cap
        return verdict


def _table_row(traj):
    cfg = traj.config
    tau = cfg.tau
    dom = traj.states[0].v.domain
    recs = traj.records
    states = traj.states
    v_h0 = [math.sqrt(max(inner_H(s.v, s.v), 0.0)) for s in states]
    l2 = lambda vals: math.sqrt(sum(tau * val ** 2 for val in vals))
    xi_h_bulk = [math.sqrt(float(dom.M_bulk @ s.xi.bulk ** 2)) for s in states[1:]]
    xi_h_surf = [math.sqrt(float(dom.M_surf @ s.xi.boundary ** 2)) for s in states[1:]]
    dq_v0star = []
    dq_h0 = []
    for prev, cur in zip(states[:-1], states[1:]):
        diff = cur.v - prev.v
        dq_v0star.append(norm_V0_star(as_functional(diff)) / tau)
        dq_h0.append(math.sqrt(max(inner_H(diff, diff), 0.0)) / tau)
    return {
        "eps": cfg.eps,
        "sqrt_eps_max_v_H0": math.sqrt(cfg.eps) * max(v_h0),
        "max_v_V0star": max(r.norm_v_V0star for r in recs),
        "l2_v_V0": l2([r.norm_v_V0 for r in recs[1:]]),
        "l1l1_xi_bulk": sum(tau * r.l1_xi_bulk for r in recs[1:]),
        "l1l1_xi_surf": sum(tau * r.l1_xi_surf for r in recs[1:]),
        "l2l1_xi_bulk": l2([r.l1_xi_bulk for r in recs[1:]]),
        "l2l1_xi_surf": l2([r.l1_xi_surf for r in recs[1:]]),
        "l2h_xi_bulk": l2(xi_h_bulk),
        "l2h_xi_surf": l2(xi_h_surf),
        "max_env_bulk": max(r.envelope_integral_bulk for r in recs),
        "max_env_surf": max(r.envelope_integral_surf for r in recs),
        "l2_omega": l2([r.omega for r in recs[1:]]),
        "l2_mu_V": l2([r.norm_mu_V for r in recs[1:]]),
        "l2_dq_V0star": l2(dq_v0star),
        "sqrt_eps_l2_dq_H0": math.sqrt(cfg.eps) * l2(dq_h0),
    }


def apriori_bound_table(trajs):
    """Tabulate the discrete analogs of the uniformly bounded norms."""
    rows = tuple(_table_row(t) for t in trajs)
    return AprioriTable(columns=tuple(_TABLE_COLUMNS), rows=rows)


# --- vanishing regularization -------------------------------------------------

@dataclass(frozen=True)
class EpsStudyReport:
    """Cauchy distances and uniform-bound verdicts of a regularization sweep."""

    eps_list: tuple
    d_h0: tuple
    d_l2v0: tuple
    cauchy_pass: bool
    table: AprioriTable
    bounded_pass: bool
    slope_l2_v_V0: float
    partial: bool

    @property
    def passed(self):
        return self.cauchy_pass and self.bounded_pass and not self.partial

    def summary_lines(self):
        lines = [f"eps sweep: {list(self.eps_list)}",
                 f"successive H0 distances: {[repr(d) for d in self.d_h0]}",
                 ("PASS" if self.cauchy_pass else "FAIL")
                 + ": successive distances nonincreasing within 10%",
                 ("PASS" if self.bounded_pass else "FAIL")
                 + ": uniform-bound columns within a common envelope",
                 f"l2_v_V0 slope against log(eps): {self.slope_l2_v_V0!r}"]
        if self.partial:
            lines.append("FAIL: some member runs aborted")
        return lines


def vanishing_eps_study(config_base, eps_list, u0, forcing=None,
                        max_workers=None):
    """Run one data set across a decreasing sweep of regularization values.

    Reports the successive-solution distances max_t |v_k - v_{k+1}|_{H0} and
    their L2-in-time gradient-norm analogs, flags Cauchy behavior when the
    sequence is nonincreasing within 10 percent slack, and attaches the
    uniform-bound table across the sweep.
    """
    eps_list = tuple(float(e) for e in eps_list)
    if len(eps_list) < 3:
        raise ConfigError("eps sweep needs at least 3 entries")
    if any(not 0.0 < e <= 1.0 for e in eps_list):
        raise ConfigError("eps sweep entries must lie in (0,1]")
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps sweep must be nonincreasing")
    jobs = [(replace(config_base, eps=e), u0, forcing) for e in eps_list]
    trajs = _run_many(jobs, _max_workers(max_workers))
    partial = any(t.aborted for t in trajs)

    tau = config_base.tau
    d_h0 = []
    d_l2v0 = []
    for t1, t2 in zip(trajs, trajs[1:]):
        n = min(len(t1.states), len(t2.states))
        dh = 0.0
        acc = 0.0
        for k in range(n):
            diff = t1.states[k].v - t2.states[k].v
            dh = max(dh, math.sqrt(max(inner_H(diff, diff), 0.0)))
            if k >= 1:
                acc += tau * form_a(diff, diff)
        d_h0.append(dh)
        d_l2v0.append(math.sqrt(acc))

    cauchy = all(b <= 1.1 * a + 1e-14 for a, b in zip(d_h0, d_h0[1:]))
    table = apriori_bound_table(trajs)
    bounded = all(table.bounded().values())
    col = table.column("l2_v_V0")
    if np.all(col > 0.0):
        slope = float(np.polyfit(np.log(np.array(eps_list)), np.log(col), 1)[0])
    else:
        slope = 0.0
    return EpsStudyReport(eps_list=eps_list, d_h0=tuple(d_h0),
                          d_l2v0=tuple(d_l2v0), cauchy_pass=cauchy,
                          table=table, bounded_pass=bounded,
                          slope_l2_v_V0=slope, partial=partial)


# --- structural checks on a domain -------------------------------------------

@dataclass(frozen=True)
class AppendixItem:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AppendixReport:
    items: tuple

    @property
    def passed(self):
        return all(item.passed for item in self.items)

    def summary_lines(self):
        return [("PASS" if it.passed else "FAIL") + f": {it.name} ({it.detail})"
                for it in self.items]


def _random_trace_consistent(dom, rng, zero_mean=True, normalize="V"):
    z = FieldPair.from_bulk(dom, rng.standard_normal(dom.n_bulk))
    if zero_mean:
        z = project_zero_mean(z)
    if normalize == "V":
        nrm = math.sqrt(max(inner_V(z, z), 1e-300))
        z = z * (1.0 / nrm)
    return z


def appendix_checks(dom, n_field_samples=1000, n_pair_samples=100, seed=2024):
    """Bundle of structural checks on an assembled domain.

    Checks the positivity of the coercivity constant, the sampled coercivity
    inequality on random zero-mean trace-consistent fields, the adjointness
    of the weak Laplacian pair against the stiffness form, and the
    mean-projection identity.  Report-only.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    items = []

    cp = poincare_constant(dom)
    items.append(AppendixItem("coercivity constant positive", cp > 0.0,
                              f"c_p = {cp!r}"))

    worst = math.inf
    for _ in range(n_field_samples):
        z = _random_trace_consistent(dom, rng)
        worst = min(worst, form_a(z, z) - cp * inner_V(z, z))
    items.append(AppendixItem("sampled coercivity inequality", worst >= -1e-9,
                              f"worst slack = {worst!r} over {n_field_samples} fields"))

    worst = 0.0
    for _ in range(n_pair_samples):
        z = _random_trace_consistent(dom, rng)
        zt = _random_trace_consistent(dom, rng)
        err = abs(inner_H(subgrad_phi(z), zt) - form_a(z, zt))
        worst = max(worst, err)
    items.append(AppendixItem("subgradient adjointness", worst <= 1e-10,
                              f"worst error = {worst!r} over {n_pair_samples} pairs"))

    worst = 0.0
    for _ in range(n_pair_samples):
        zstar = project_zero_mean(FieldPair(rng.standard_normal(dom.n_bulk),
                                            rng.standard_normal(dom.n_boundary), dom))
        zt = FieldPair(rng.standard_normal(dom.n_bulk),
                       rng.standard_normal(dom.n_boundary), dom)
        err = abs(inner_H(zstar, project_zero_mean(zt)) - inner_H(zstar, zt))
        worst = max(worst, err)
    items.append(AppendixItem("mean-projection identity", worst <= 1e-12 * dom.n_bulk,
                              f"worst error = {worst!r} over {n_pair_samples} pairs"))

    return AppendixReport(items=tuple(items))

"""Two-level Galerkin time evolution of the coupled coefficient system.

State layout (coefficients of the modal expansion):

    u      = sum_n alpha_n w_n            displacement
    theta  = sum_m beta_m v_m             temperature (homogeneous part)
    eps_p  = sum_n gamma_n eps(w_n) + sum_m delta_m zeta_m

The discrete equilibrium row forces alpha_n = gamma_n, so the homogeneous
stress is carried entirely by the complement coefficients,
T = -sum_m delta_m D zeta_m, and the stress never sees the gradient part of
the inelastic strain.

One step advances (gamma, delta, beta) by implicit Euler; the nonlinear
algebraic system is solved by a damped fixed-point iteration whose map is a
contraction for small dt thanks to the monotonicity of the law.  Steps too
stiff for the iteration are split by residual-based dt halving with the lift
interpolated linearly between grid samples.  The heat row is diagonal in the
eigenbasis: beta_m <- (beta_m + dt s_m)/(1 + dt mu_m) with the truncated,
sign-clipped dissipation source s_m.

Energy bookkeeping: the scheme satisfies the exact discrete counterpart of
the continuous energy identity,

    E(new) - E(old) + dt * integral G(new state) : Tbar^d = O(solver residual),

where Tbar is the midpoint stress (T(new)+T(old))/2 and E = |delta|^2 / 2 is
the homogeneous potential energy (the zeta family is D-orthonormal).  The
per-step defect reported by the stepper is this quantity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisFields, GalerkinBasis, basis_fields
from .constitutive import BodnerPartom
from .errors import BadData, NonlinearSolveFailure, StateCorrupt
from .lifting import LiftedFields
from .mesh_fem import AssembledOperators
from .tensor import dev6, dot6, norm6, trace6


def truncate(x, level: float):
    """Symmetric clamp to [-level, level]."""
    return np.clip(x, -level, level)


@dataclass
class EvolutionConfig:
    k: int
    l: int
    dt: float
    n_steps: int
    truncation_level: float | None = None  # defaults to the Galerkin index k
    solver_tol: float = 1e-12
    solver_max_iter: int = 200
    damping: float = 1.0
    clip_source: bool = True
    check_invariants: bool = True

    def __post_init__(self):
        if self.k < 1 or self.l < 1:
            raise BadData(f"basis sizes must be >= 1, got k={self.k}, l={self.l}")
        if not (self.dt > 0.0):
            raise BadData(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise BadData(f"n_steps must be >= 0, got {self.n_steps}")
        if self.level <= 0.0:
            raise BadData(f"truncation level must be positive, got {self.level}")
        if not (0.0 < self.damping <= 1.0):
            raise BadData(f"damping must be in (0, 1], got {self.damping}")

    @property
    def level(self) -> float:
        return float(self.k if self.truncation_level is None else self.truncation_level)


@dataclass
class SimState:
    """Coefficient vectors at one time instant."""

    t: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    y_quad: np.ndarray | None = None

    def validate(self):
        if not np.array_equal(self.alpha, self.gamma):
            raise StateCorrupt("equilibrium elimination broken: alpha != gamma")
        for name in ("alpha", "beta", "gamma", "delta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise StateCorrupt(f"non-finite coefficients in {name}")
        if self.y_quad is not None and not np.all(np.isfinite(self.y_quad)):
            raise StateCorrupt("non-finite hardening field")

    def copy(self) -> "SimState":
        return SimState(
            t=self.t,
            alpha=self.alpha.copy(),
            beta=self.beta.copy(),
            gamma=self.gamma.copy(),
            delta=self.delta.copy(),
            y_quad=None if self.y_quad is None else self.y_quad.copy(),
        )


@dataclass
class StepReport:
    t: float
    iters: int
    residual: float
    energy_defect: float
    dissipation: float
    source_integral: float
    equilibrium_residual: float
    epsp_trace_sup: float
    clip_fraction: float
    trunc_fraction: float


class ModalSystem:
    """Precomputed Gauss-point mode tables binding mesh, basis and law."""

    def __init__(self, ops: AssembledOperators, basis: GalerkinBasis, law):
        self.ops = ops
        self.basis = basis
        self.law = law
        self.fields: BasisFields = basis_fields(ops, basis)
        self.lam = basis.lam_w
        self.mu = basis.mu_v
        self.wq = ops.wq
        self.k = basis.k
        self.l = basis.l

    # -- field reconstruction at Gauss points --------------------------------

    def epsp_quad(self, gamma, delta) -> np.ndarray:
        return np.einsum("n,nqi->qi", gamma, self.fields.eps_w) + np.einsum(
            "m,mqi->qi", delta, self.fields.zeta
        )

    def T_hom_quad(self, delta) -> np.ndarray:
        return -np.einsum("m,mqi->qi", delta, self.fields.D_zeta)

    def theta_nodal(self, beta) -> np.ndarray:
        return beta @ self.fields.v_nodal

    def theta_quad(self, beta) -> np.ndarray:
        return beta @ self.fields.v_quad

    def u_nodal(self, alpha) -> np.ndarray:
        return alpha @ self.basis.W

    def eps_u_quad(self, alpha) -> np.ndarray:
        return np.einsum("n,nqi->qi", alpha, self.fields.eps_w)


def initialize(
    system: ModalSystem, theta0_nodal, epsp0_quad, config: EvolutionConfig, validate=True
) -> SimState:
    """Project the (truncated) initial data onto the Galerkin families.

    ``validate=False`` skips the tracelessness precondition on the initial
    inelastic strain; the projection itself is defined for any strain field.
    """
    ops = system.ops
    theta0 = np.asarray(theta0_nodal, dtype=float)
    if theta0.shape != (ops.n_nodes,) or not np.isfinite(theta0).all():
        raise BadData("initial temperature must be a finite nodal field")
    epsp0 = np.asarray(epsp0_quad, dtype=float)
    if epsp0.shape != (ops.wq.size, 6) or not np.isfinite(epsp0).all():
        raise BadData("initial inelastic strain must be a finite quadrature field")
    tr = np.abs(trace6(epsp0)).max()
    if validate and tr > 1e-10 * max(1.0, float(norm6(epsp0).max())):
        raise BadData(f"initial inelastic strain has trace {tr:.3e}")

    f = system.fields
    theta_tr = truncate(theta0, config.level)
    beta = np.einsum("mn,n,n->m", f.v_nodal, ops.M_lumped, theta_tr)
    gamma = np.einsum("q,qi,nqi->n", ops.wq, epsp0, f.D_eps_w) / system.lam
    delta = np.einsum("q,qi,mqi->m", ops.wq, epsp0, f.D_zeta)
    y_quad = None
    if isinstance(system.law, BodnerPartom):
        y_quad = np.full(ops.wq.size, system.law.y0)
    return SimState(
        t=0.0, alpha=gamma.copy(), beta=beta, gamma=gamma, delta=delta, y_quad=y_quad
    )


def _lift_slices(lifted: LiftedFields, step_index: int):
    j = lifted.elastic_index(step_index)
    return lifted.theta_tilde_quad[step_index], lifted.T_tilde_dev[j]


def step(
    system: ModalSystem,
    state: SimState,
    lifted: LiftedFields,
    step_index: int,
    config: EvolutionConfig,
):
    """One implicit-Euler step; returns (new_state, StepReport).

    ``step_index`` is the index of the *target* time level on the lift grid.
    """
    theta_t_q, Ttd_q = _lift_slices(lifted, step_index)
    return _advance(system, state, theta_t_q, Ttd_q, config.dt, config)


def _advance(system, state, theta_t_q, Ttd_q, dt, config: EvolutionConfig):
    """Implicit-Euler advance against fixed lift slices over an interval dt."""
    f = system.fields
    law = system.law
    wq = system.wq
    level = config.level

    gamma0, delta0, beta0 = state.gamma, state.delta, state.beta
    k, l = system.k, system.l
    x = np.concatenate([gamma0, delta0, beta0])

    def apply_map(xv):
        delta = xv[k : k + l]
        beta = xv[k + l :]
        T_q = -np.einsum("m,mqi->qi", delta, f.D_zeta)
        Td_phys = dev6(T_q) + Ttd_q
        theta_q = beta @ f.v_quad + theta_t_q
        if state.y_quad is not None:
            G = law.evaluate_many(theta_q, Td_phys, y=state.y_quad)
        else:
            G = law.evaluate_many(theta_q, Td_phys)
        pw = np.einsum("q,qi,nqi->n", wq, G, f.D_eps_w)
        pz = np.einsum("q,qi,mqi->m", wq, G, f.D_zeta)
        diss = dot6(Td_phys, G)
        src = np.maximum(diss, 0.0) if config.clip_source else diss
        src = truncate(src, level)
        s = np.einsum("q,q,mq->m", wq, src, f.v_quad)
        out = np.concatenate(
            [
                gamma0 + dt * pw / system.lam,
                delta0 + dt * pz,
                (beta0 + dt * s) / (1.0 + dt * system.mu),
            ]
        )
        aux = {"G": G, "T_q": T_q, "Td_phys": Td_phys, "diss": diss, "src": src, "pz": pz}
        return out, aux

    eta = config.damping
    r_prev = np.inf
    history = []
    accepted = None
    for _ in range(config.solver_max_iter):
        fx, aux = apply_map(x)
        r = float(np.abs(fx - x).max())
        history.append(r)
        if not np.isfinite(r):
            raise NonlinearSolveFailure(
                f"implicit step diverged at t={state.t + dt:.6g}", history
            )
        if r <= config.solver_tol:
            accepted = (x, fx, aux)
            break
        if r > r_prev:
            eta = max(eta / 2.0, 1.0 / 1024.0)
        x = x + eta * (fx - x)
        r_prev = r
    if accepted is None:
        raise NonlinearSolveFailure(
            f"implicit step did not converge in {config.solver_max_iter} iterations "
            f"(residual {history[-1]:.3e} at t={state.t + dt:.6g})",
            history,
        )

    x_acc, _, aux = accepted
    gamma1 = x_acc[:k].copy()
    delta1 = x_acc[k : k + l].copy()
    beta1 = x_acc[k + l :].copy()

    # exact discrete energy identity: E = |delta|^2/2 in the zeta family
    e_old = 0.5 * float(delta0 @ delta0)
    e_new = 0.5 * float(delta1 @ delta1)
    delta_bar = 0.5 * (delta0 + delta1)
    defect = e_new - e_old - dt * float(delta_bar @ aux["pz"])

    eq_res = float(
        np.abs(np.einsum("q,qi,nqi->n", wq, aux["T_q"], f.eps_w)).max()
    )
    dissipation = float(wq @ aux["diss"])
    source_integral = float(wq @ aux["src"])
    epsp = system.epsp_quad(gamma1, delta1)
    trace_sup = float(np.abs(trace6(epsp)).max())

    y1 = state.y_quad
    if y1 is not None:
        y1 = law.advance_y_many(state.y_quad, norm6(aux["Td_phys"]), dt)

    new_state = SimState(
        t=state.t + dt,
        alpha=gamma1,
        beta=beta1,
        gamma=gamma1,
        delta=delta1,
        y_quad=y1,
    )
    if config.check_invariants:
        new_state.validate()

    report = StepReport(
        t=new_state.t,
        iters=len(history),
        residual=history[-1],
        energy_defect=defect,
        dissipation=dissipation,
        source_integral=source_integral,
        equilibrium_residual=eq_res,
        epsp_trace_sup=trace_sup,
        clip_fraction=float(np.mean(aux["diss"] < 0.0)),
        trunc_fraction=float(np.mean(np.abs(aux["diss"]) > level)),
    )
    return new_state, report


#: maximum dt halvings when a step's implicit solve stalls
MAX_HALVINGS = 8


def _merge_reports(a: StepReport, b: StepReport, dt_a: float, dt_b: float) -> StepReport:
    """Composite report for two consecutive substeps covering dt_a + dt_b."""
    total = dt_a + dt_b
    wa, wb = dt_a / total, dt_b / total
    return StepReport(
        t=b.t,
        iters=a.iters + b.iters,
        residual=max(a.residual, b.residual),
        energy_defect=a.energy_defect + b.energy_defect,
        dissipation=wa * a.dissipation + wb * b.dissipation,
        source_integral=wa * a.source_integral + wb * b.source_integral,
        equilibrium_residual=max(a.equilibrium_residual, b.equilibrium_residual),
        epsp_trace_sup=b.epsp_trace_sup,
        clip_fraction=wa * a.clip_fraction + wb * b.clip_fraction,
        trunc_fraction=wa * a.trunc_fraction + wb * b.trunc_fraction,
    )


def _step_adaptive(system, state, lifted, step_index, config: EvolutionConfig):
    """One grid step with residual-based dt halving on solver stalls.

    Substeps interpolate the lift slices linearly between the two enclosing
    grid samples; the composite report carries summed defects and
    time-averaged rates, so the per-step identities remain exact.
    """
    th0, Ttd0 = _lift_slices(lifted, step_index - 1)
    th1, Ttd1 = _lift_slices(lifted, step_index)

    def attempt(st, s0, s1, depth):
        frac = s1
        theta_q = (1.0 - frac) * th0 + frac * th1
        Ttd_q = (1.0 - frac) * Ttd0 + frac * Ttd1
        try:
            return _advance(system, st, theta_q, Ttd_q, (s1 - s0) * config.dt, config)
        except NonlinearSolveFailure:
            if depth >= MAX_HALVINGS:
                raise
            mid = 0.5 * (s0 + s1)
            st_mid, rep_a = attempt(st, s0, mid, depth + 1)
            st_end, rep_b = attempt(st_mid, mid, s1, depth + 1)
            return st_end, _merge_reports(
                rep_a, rep_b, (mid - s0) * config.dt, (s1 - mid) * config.dt
            )

    return attempt(state, 0.0, 1.0, 0)


@dataclass
class RunResult:
    times: np.ndarray
    gamma: np.ndarray  # (n_steps+1, k)
    delta: np.ndarray
    beta: np.ndarray
    reports: list = field(repr=False)
    final_state: SimState = None


def run(
    system: ModalSystem,
    state0: SimState,
    lifted: LiftedFields,
    config: EvolutionConfig,
    on_step=None,
) -> RunResult:
    """Advance to the horizon, streaming (step_index, state, report) callbacks."""
    n = config.n_steps
    if (config.k, config.l) != (system.k, system.l):
        raise BadData(
            f"config sizes (k={config.k}, l={config.l}) do not match the basis "
            f"(k={system.k}, l={system.l})"
        )
    if lifted.times.size < n + 1:
        raise BadData(
            f"lift sampled on {lifted.times.size} levels but the run needs {n + 1}"
        )
    k, l = system.k, system.l
    gam = np.empty((n + 1, k))
    del_ = np.empty((n + 1, l))
    bet = np.empty((n + 1, l))
    gam[0], del_[0], bet[0] = state0.gamma, state0.delta, state0.beta
    reports = []
    state = state0
    if on_step is not None:
        on_step(0, state, None)
    for i in range(1, n + 1):
        state, rep = _step_adaptive(system, state, lifted, i, config)
        gam[i], del_[i], bet[i] = state.gamma, state.delta, state.beta
        reports.append(rep)
        if on_step is not None:
            on_step(i, state, rep)
    return RunResult(
        times=lifted.times[: n + 1].copy(),
        gamma=gam,
        delta=del_,
        beta=bet,
        reports=reports,
        final_state=state,
    )


def reconstruct_fields(
    system: ModalSystem, state: SimState, lifted: LiftedFields, step_index: int
) -> dict:
    """Physical nodal/quadrature fields assembled from the coefficients.

    The stress honors T = D(eps(u) - eps_p) pointwise at the Gauss points.
    """
    ops = system.ops
    j = lifted.elastic_index(step_index)
    u_hom = system.u_nodal(state.alpha)
    eps_u_hom = system.eps_u_quad(state.alpha)
    epsp = system.epsp_quad(state.gamma, state.delta)
    T_hom = ops.apply_D_quad(eps_u_hom - epsp)
    theta_hom = system.theta_nodal(state.beta)

    u_phys = u_hom + lifted.u_tilde[j]
    eps_u_phys = eps_u_hom + lifted.eps_u_tilde[j]
    T_phys = T_hom + lifted.T_tilde[j]
    theta_phys = theta_hom + lifted.theta_tilde[step_index]
    return {
        "u_hom": u_hom,
        "u": u_phys,
        "eps_u": eps_u_phys,
        "epsp": epsp,
        "T_hom": T_hom,
        "T": T_phys,
        "Td": dev6(T_phys),
        "theta_hom": theta_hom,
        "theta": theta_phys,
        "theta_quad": system.theta_quad(state.beta) + lifted.theta_tilde_quad[step_index],
    }


def make_state(t, gamma, delta, beta, y_quad=None) -> SimState:
    """Assemble a state from raw coefficient vectors (alpha is slaved)."""
    gamma = np.asarray(gamma, dtype=float)
    return SimState(
        t=float(t),
        alpha=gamma.copy(),
        beta=np.asarray(beta, dtype=float).copy(),
        gamma=gamma.copy(),
        delta=np.asarray(delta, dtype=float).copy(),
        y_quad=y_quad,
    )

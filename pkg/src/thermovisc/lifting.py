"""Auxiliary problems that carry the inhomogeneous boundary data.

The elastic lift solves the stationary system -div(D eps(u)) = f with the
prescribed boundary displacement, via a nodal-interpolation extension of the
boundary values plus a homogeneous correction.  The heat lift advances the
sourceless heat equation with the prescribed Neumann flux by implicit Euler
on the lumped-mass scheme.  Subtracting the lifted fields turns the physical
problem into one with homogeneous boundary conditions; ``recombine`` undoes
the split for output and diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import BadData, DimensionMismatch, SolverFailure
from .mesh_fem import AssembledOperators
from .tensor import dev6


@dataclass
class LiftedFields:
    """Lift data sampled on the run's time grid."""

    times: np.ndarray
    elastic_static: bool
    u_tilde: np.ndarray = field(repr=False)  # (ntu, ndof)
    eps_u_tilde: np.ndarray = field(repr=False)  # (ntu, NQ, 6)
    T_tilde: np.ndarray = field(repr=False)
    T_tilde_dev: np.ndarray = field(repr=False)
    theta_tilde: np.ndarray = field(repr=False)  # (nt, n)
    theta_tilde_quad: np.ndarray = field(repr=False)
    theta_tilde0: np.ndarray = field(repr=False)
    flux_integral: np.ndarray = field(repr=False)  # int g_theta ds per sample

    def elastic_index(self, step: int) -> int:
        return 0 if self.elastic_static else step

    def is_zero(self) -> bool:
        return (
            float(np.abs(self.u_tilde).max(initial=0.0)) == 0.0
            and float(np.abs(self.theta_tilde).max(initial=0.0)) == 0.0
        )


def solve_elastic_lift(ops: AssembledOperators, f_nodal=None, g_boundary=None):
    """Solve the auxiliary elastic system; returns (u, eps_quad, T_quad).

    ``f_nodal`` is a nodal force density (n, d); ``g_boundary`` holds the
    prescribed displacement on boundary nodes (interior entries ignored).
    """
    mesh = ops.mesh
    dim = mesh.dim
    n = ops.n_nodes
    if f_nodal is None:
        f_nodal = np.zeros((n, dim))
    f_nodal = np.asarray(f_nodal, dtype=float)
    if f_nodal.shape != (n, dim):
        raise DimensionMismatch(f"f must be ({n}, {dim}), got {f_nodal.shape}")
    if not np.isfinite(f_nodal).all():
        raise BadData("force field has non-finite entries")

    g_lift = np.zeros((n, dim))
    if g_boundary is not None:
        g_boundary = np.asarray(g_boundary, dtype=float)
        if g_boundary.shape != (n, dim):
            raise DimensionMismatch(f"g must be ({n}, {dim}), got {g_boundary.shape}")
        if not np.isfinite(g_boundary[mesh.boundary_mask]).all():
            raise BadData("boundary displacement has non-finite entries")
        g_lift[mesh.boundary_mask] = g_boundary[mesh.boundary_mask]

    rhs = ops.M_u @ f_nodal.ravel() - ops.K_D @ g_lift.ravel()
    free = ops.interior_dofs
    u = g_lift.ravel().copy()
    if free.size:
        kff = ops.K_D[free][:, free].tocsc()
        u[free] += splu(kff).solve(rhs[free])
        res = np.linalg.norm((ops.K_D @ u - ops.M_u @ f_nodal.ravel())[free])
        scale = max(np.linalg.norm(rhs[free]), 1e-30)
        if res > 1e-10 * max(scale, 1.0):
            raise SolverFailure(f"elastic lift residual {res:.3e} exceeds tolerance")
    eps_q = ops.strain_quad(u)
    return u, eps_q, ops.apply_D_quad(eps_q)


def solve_heat_lift(ops: AssembledOperators, g_flux, theta0, times):
    """Implicit-Euler trajectory of the sourceless Neumann heat lift.

    ``g_flux`` is (nt, n) nodal flux data (used on boundary nodes only),
    ``theta0`` the auxiliary initial field.  Lumped mass keeps the scheme
    positivity preserving and makes the zero-flux heat content exactly
    conserved.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1 or np.any(np.diff(times) <= 0):
        raise BadData("time grid must be strictly increasing")
    n = ops.n_nodes
    theta0 = np.asarray(theta0, dtype=float)
    g_flux = np.asarray(g_flux, dtype=float)
    if theta0.shape != (n,) or g_flux.shape != (times.size, n):
        raise DimensionMismatch(
            f"theta0 {theta0.shape} or flux {g_flux.shape} does not match grid"
        )
    if not (np.isfinite(theta0).all() and np.isfinite(g_flux).all()):
        raise BadData("heat lift data has non-finite entries")

    out = np.empty((times.size, n))
    out[0] = theta0
    lu = None
    last_dt = None
    for i in range(times.size - 1):
        dt = float(times[i + 1] - times[i])
        if lu is None or dt != last_dt:
            A = (sp.diags(ops.M_lumped) + dt * ops.K_theta).tocsc()
            lu = splu(A)
            last_dt = dt
        b = ops.M_lumped * out[i] + dt * (ops.B_boundary @ g_flux[i + 1])
        out[i + 1] = lu.solve(b)
        res = np.linalg.norm(
            ops.M_lumped * out[i + 1] + dt * (ops.K_theta @ out[i + 1]) - b
        )
        if res > 1e-12 * max(np.linalg.norm(b), 1.0):
            raise SolverFailure(f"heat lift residual {res:.3e} at step {i + 1}")
    return out


def build_lift(
    ops: AssembledOperators,
    times,
    f_of_t=None,
    g_of_t=None,
    gtheta_of_t=None,
    theta_tilde0=None,
    static_elastic: bool = True,
) -> LiftedFields:
    """Assemble the full lift trajectory from time-sampled data callables.

    Each callable maps a time to nodal data; ``static_elastic`` marks f and g
    as time independent so the elastic solve is done (and cached) once.
    """
    times = np.asarray(times, dtype=float)
    n = ops.n_nodes
    dim = ops.mesh.dim
    nt = times.size

    def f_at(t):
        return np.zeros((n, dim)) if f_of_t is None else np.asarray(f_of_t(t), dtype=float)

    def g_at(t):
        return None if g_of_t is None else np.asarray(g_of_t(t), dtype=float)

    n_elastic = 1 if static_elastic else nt
    u_t = np.zeros((n_elastic, ops.n_dofs))
    eps_t = np.zeros((n_elastic, ops.wq.size, 6))
    T_t = np.zeros((n_elastic, ops.wq.size, 6))
    for i in range(n_elastic):
        t = times[0] if static_elastic else times[i]
        u_t[i], eps_t[i], T_t[i] = solve_elastic_lift(ops, f_at(t), g_at(t))

    theta0 = (
        np.zeros(n) if theta_tilde0 is None else np.asarray(theta_tilde0, dtype=float)
    )
    if gtheta_of_t is None and not theta0.any():
        theta = np.zeros((nt, n))
        flux = np.zeros(nt)
        theta_q = np.zeros((nt, ops.wq.size))
    else:
        g_flux = np.stack(
            [
                np.zeros(n) if gtheta_of_t is None else np.asarray(gtheta_of_t(t), dtype=float)
                for t in times
            ]
        )
        theta = solve_heat_lift(ops, g_flux, theta0, times) if nt > 1 else theta0[None, :]
        ones = np.ones(n)
        flux = np.array([ones @ (ops.B_boundary @ g_flux[i]) for i in range(nt)])
        theta_q = np.stack([ops.scalar_quad(theta[i]) for i in range(nt)])

    return LiftedFields(
        times=times,
        elastic_static=static_elastic,
        u_tilde=u_t,
        eps_u_tilde=eps_t,
        T_tilde=T_t,
        T_tilde_dev=dev6(T_t),
        theta_tilde=theta,
        theta_tilde_quad=theta_q,
        theta_tilde0=theta0,
        flux_integral=flux,
    )


def zero_lift(ops: AssembledOperators, times) -> LiftedFields:
    return build_lift(ops, times)


def recombine(u_hom, theta_hom, T_hom_quad, lifted: LiftedFields, step: int) -> dict:
    """Physical fields from homogeneous-solution fields plus the lift."""
    j = lifted.elastic_index(step)
    if u_hom.shape != lifted.u_tilde[j].shape or theta_hom.shape != lifted.theta_tilde[step].shape:
        raise DimensionMismatch("homogeneous fields do not match the lift grids")
    return {
        "u": u_hom + lifted.u_tilde[j],
        "theta": theta_hom + lifted.theta_tilde[step],
        "T": T_hom_quad + lifted.T_tilde[j],
    }

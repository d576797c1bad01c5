"""Closed-loop control: at every time node the control velocity is the
Stokes projection of a feedback force assembled from the current
temperature alone.

Given T^i, the force is tau * face_force(eta, T^i) with
(I - kappa*tau*Laplacian) eta = dev(T^i); the resulting velocity advects the
temperature over the step [t_i, t_{i+1}].  tau = 0 gives exactly the
uncontrolled evolution (zero force short-circuits the Stokes solve to exact
zeros, and advection by an all-zero field contributes exactly nothing to the
right-hand side).
"""

import logging

import numpy as np

from .errors import ConfigError, SolverError
from .grid import (ScalarField, StaggeredVelocity, advect, deviation,
                   face_force, grad_seminorm_sq, norm_l2,
                   scalar_grad_seminorm_sq, vel_norm_l2)
from .linsolve import HelmholtzOperator, helmholtz_solve
from .objective import evaluate, evaluate_nodal
from .pde import ControlTrajectory, Trajectory, _check_cfl
from .stokes import stokes_solve

logger = logging.getLogger(__name__)


class FeedbackConfig:
    """Feedback gain, physics, cost weights, and discretization for one
    closed-loop run."""

    __slots__ = ("tau", "gamma", "kappa", "timegrid", "grid",
                 "alpha", "beta", "stokes_tol")

    def __init__(self, tau, gamma, kappa, timegrid, grid,
                 alpha=0.0, beta=1.0, stokes_tol=1e-10):
        if tau < 0:
            raise ConfigError(f"feedback gain must be >= 0, got {tau}")
        if gamma <= 0 or kappa <= 0:
            raise ConfigError(f"need gamma > 0 and kappa > 0, got {gamma}, {kappa}")
        self.tau = float(tau)
        self.gamma = float(gamma)
        self.kappa = float(kappa)
        self.timegrid = timegrid
        self.grid = grid
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.stokes_tol = float(stokes_tol)

    def with_tau(self, tau):
        return FeedbackConfig(tau, self.gamma, self.kappa, self.timegrid,
                              self.grid, self.alpha, self.beta, self.stokes_tol)


class ClosedLoopRun:
    """Trajectories plus per-node decay diagnostics.

    Arrays have one entry per time node: ``dev_norms[i]`` is ||dev T^i||,
    ``vel_norms[i]`` the L2 norm of the control applied on [t_i, t_{i+1}]
    (the last entry repeats the final control), ``mix_norms[i]`` the mixing
    norm of T^i, and ``control_power[i]`` the gradient energy
    gamma*|v|^2_grad of that control (0 for an uncontrolled run).
    """

    __slots__ = ("T", "v", "objective", "dev_norms", "vel_norms",
                 "mix_norms", "control_power")

    def __init__(self, T, v, objective, dev_norms, vel_norms, mix_norms,
                 control_power):
        self.T = T
        self.v = v
        self.objective = objective
        self.dev_norms = np.asarray(dev_norms)
        self.vel_norms = np.asarray(vel_norms)
        self.mix_norms = np.asarray(mix_norms)
        self.control_power = np.asarray(control_power)


def mix_norm(T, coeff=1.0):
    """Negative-index Sobolev-type mixing norm sqrt(||eta||^2 + |eta|_H1^2)
    with (I - coeff*Laplacian) eta = dev(T).  ``coeff`` scales the smoothing
    operator (1.0 for the reporting norm; pass kappa*tau to reuse the
    feedback regularizer)."""
    op = HelmholtzOperator(T.grid, coeff)
    eta, _ = helmholtz_solve(op, deviation(T))
    return float(np.sqrt(norm_l2(eta) ** 2 + scalar_grad_seminorm_sq(eta)))


def feedback_velocity(T, cfg, _op=None):
    """Instantaneous control for the current temperature: Stokes velocity of
    the force tau * face_force(eta, T), eta solving
    (I - kappa*tau*Laplacian) eta = dev(T).  Returns the full Stokes solution
    (velocity, pressure, report)."""
    if cfg.tau == 0.0:
        return stokes_solve(StaggeredVelocity.zeros(T.grid), cfg.gamma,
                            cfg.stokes_tol)
    op = _op if _op is not None else HelmholtzOperator(T.grid, cfg.kappa * cfg.tau)
    eta, _ = helmholtz_solve(op, deviation(T))
    force = face_force(eta, T) * cfg.tau
    return stokes_solve(force, cfg.gamma, cfg.stokes_tol)


def closed_loop_step(T_i, cfg, _ops=None):
    """Advance one step: compute the feedback control from T_i, then take
    one semi-implicit transport-diffusion step with it.  Returns
    (T_{i+1}, v_i)."""
    helm_op, step_op = _ops if _ops is not None else _build_ops(cfg)
    sol = feedback_velocity(T_i, cfg, helm_op)
    v = sol.velocity
    rhs = T_i - advect(v, T_i) * cfg.timegrid.dt
    T_next, _ = helmholtz_solve(step_op, rhs)
    return T_next, v


def _build_ops(cfg):
    helm_op = (HelmholtzOperator(cfg.grid, cfg.kappa * cfg.tau)
               if cfg.tau > 0.0 else None)
    step_op = HelmholtzOperator(cfg.grid, cfg.kappa * cfg.timegrid.dt)
    return helm_op, step_op


def simulate_closed_loop(cfg, T0):
    """March the feedback loop over the whole time grid.

    Returns a ClosedLoopRun whose objective is evaluated with the run's
    (alpha, beta, gamma) weights; the control trajectory stores at entry i
    exactly the feedback velocity computed from T^i.
    """
    if T0.grid != cfg.grid:
        raise ConfigError("initial condition lives on a different grid")
    ops = _build_ops(cfg)
    tg = cfg.timegrid
    fields = [T0.copy()]
    vels = []
    T = fields[0]
    for i in range(tg.n_t):
        T, v = closed_loop_step(T, cfg, ops)
        fields.append(T)
        vels.append(v)
    T_traj = Trajectory(tg, fields)
    v_traj = ControlTrajectory(tg, vels)
    _check_cfl(v_traj, tg)
    dev_norms = [norm_l2(deviation(f)) for f in fields]
    mix_norms = [mix_norm(f) for f in fields]
    vel_norms = [vel_norm_l2(v) for v in vels]
    vel_norms.append(vel_norms[-1])
    power = [cfg.gamma * grad_seminorm_sq(v) for v in vels]
    power.append(power[-1])
    objective = evaluate(T_traj, v_traj, cfg.alpha, cfg.beta, cfg.gamma)
    return ClosedLoopRun(T_traj, v_traj, objective,
                         dev_norms, vel_norms, mix_norms, power)


class SweepRow:
    """One gain's outcome: cost breakdowns plus decay diagnostics, or the
    error that stopped it (``objective`` set on success, ``error`` on
    failure).  ``objective`` is the optimization-convention cost;
    ``reported`` the vertex-measured one.  Trajectories are dropped to keep
    long sweeps lean."""

    __slots__ = ("tau", "objective", "reported", "dev_norms", "vel_norms",
                 "mix_norms", "error")

    def __init__(self, tau, objective=None, reported=None, dev_norms=None,
                 vel_norms=None, mix_norms=None, error=None):
        self.tau = float(tau)
        self.objective = objective
        self.reported = reported
        self.dev_norms = dev_norms
        self.vel_norms = vel_norms
        self.mix_norms = mix_norms
        self.error = error


def tau_sweep(cfg_base, taus, T0):
    """Run the closed loop once per gain value in ``taus``.

    Returns a list of SweepRow; a failing gain records its error and the
    sweep continues.  tau = 0 reproduces the uncontrolled trajectory
    exactly (same solver path, bit-identical fields).
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ConfigError("tau sweep needs at least one gain value")
    if any(t < 0 for t in taus):
        raise ConfigError("gain values must be >= 0")
    rows = []
    for tau in taus:
        cfg = cfg_base.with_tau(tau)
        try:
            run = simulate_closed_loop(cfg, T0)
            rows.append(SweepRow(
                tau, objective=run.objective,
                reported=evaluate_nodal(run.T, run.v, cfg.alpha, cfg.beta, cfg.gamma),
                dev_norms=run.dev_norms, vel_norms=run.vel_norms,
                mix_norms=run.mix_norms))
        except (SolverError, FloatingPointError) as err:
            logger.warning("gain %.3g failed: %s", tau, err)
            rows.append(SweepRow(tau, error=str(err)))
    return rows

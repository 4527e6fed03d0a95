"""Independent verification paths for the closed-form results.

Two routes that share no math with the spectral formulas:

* :func:`mode_integral` evaluates the per-mode frequency integral behind
  the performance measure by adaptive quadrature with an analytic tail.
* :func:`simulate` runs Euler-Maruyama on the stochastic delay equation
  itself, with a delayed-state ring buffer, and estimates the steady-state
  dispersion with a standard error across independent trajectories.

Both are deliberately dumb and slow relative to the spectral path; their
job is to disagree loudly if a formula is wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .centrality import NoiseStructure, input_matrix, noise_channels
from .graph import GraphMatrices
from .quadrature import integrate_adaptive
from .spectral import StabilityError, decompose, stability_margin

# Steps of pre-generated noise held in memory at a time.
_NOISE_CHUNK = 4096
# State magnitude beyond which a run is declared numerically unstable.
_DIVERGENCE_LIMIT = 1e8


class SimulationError(RuntimeError):
    """Monte Carlo run failed (divergence or invalid configuration)."""


def mode_integral(lam: float, tau: float, eps_q: float = 1e-8) -> float:
    """H2 contribution of one Laplacian mode, by quadrature.

    Integrates ``1 / |j w + lam e^(-j tau w)|^2`` over the whole real line
    (the integrand is even, so the half line is doubled) and normalizes by
    ``1 / 2 pi``.  Beyond the truncation frequency the integrand is
    ``1/w^2`` plus an oscillating remainder, so the tail is taken
    analytically: its principal part integrates to ``1/w_max`` and the
    remainder is bounded below ``eps_q / 2``.  Diverges at
    ``tau * lam >= pi / 2``, which is rejected.
    """
    if not (lam > 0):
        raise ValueError(f"eigenvalue must be positive, got {lam}")
    if tau < 0:
        raise ValueError(f"delay must be nonnegative, got {tau}")
    if not (eps_q > 0):
        raise ValueError(f"tolerance must be positive, got {eps_q}")
    if tau * lam >= math.pi / 2:
        raise StabilityError(tau, math.pi / (2 * lam))

    def integrand(omega: np.ndarray) -> np.ndarray:
        re = lam * np.cos(tau * omega)
        im = omega - lam * np.sin(tau * omega)
        return 1.0 / (re * re + im * im)

    # Remainder after subtracting 1/w^2, valid for w >= 4 lam:
    # a crude O(1/w^2) bound and a sharper O(1/w^3) one that exploits the
    # oscillation of the sin(tau w)/w^3 term (useless as tau -> 0).
    budget = 0.5 * eps_q * math.pi
    omega_crude = math.sqrt(2.5 * lam / budget)
    omega_max = omega_crude
    if tau > 0:
        omega_osc = ((4.0 * lam / tau + 4.0 * lam**2) / budget) ** (1.0 / 3.0)
        omega_max = min(omega_crude, omega_osc)
    omega_max = max(4.0 * lam, 10.0, omega_max)
    body = integrate_adaptive(integrand, 0.0, omega_max, abs_tol=budget)
    return (body + 1.0 / omega_max) / math.pi


@dataclass(frozen=True)
class SimConfig:
    """Euler-Maruyama run parameters.

    The delay must land on the step grid to within 0.5% (it is snapped to
    the nearest multiple of ``dt``), and ``dt`` may not exceed ``tau / 20``
    for a delayed run.  Per-trajectory noise streams are derived from
    ``seed XOR trajectory_index`` through a counter-based generator, so
    results are independent of trajectory scheduling.
    """

    tau: float
    dt: float = 1e-3
    burn_in: float = 50.0
    horizon: float = 500.0
    n_traj: int = 32
    seed: int = 0
    scheme: str = "euler-maruyama"

    def __post_init__(self) -> None:
        if self.tau < 0:
            raise ValueError(f"delay must be nonnegative, got {self.tau}")
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.tau > 0 and self.dt > self.tau / 20 * (1 + 1e-12):
            raise ValueError(
                f"dt={self.dt:.6g} too coarse for tau={self.tau:.6g}; need dt <= tau/20"
            )
        if not (self.burn_in > 0 and self.horizon > 0):
            raise ValueError("burn_in and horizon must be positive")
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.scheme != "euler-maruyama":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if self.tau > 0:
            snapped = round(self.tau / self.dt) * self.dt
            if abs(snapped - self.tau) > 0.005 * self.tau:
                raise ValueError(
                    f"tau={self.tau:.6g} is {abs(snapped - self.tau):.3g} away from the"
                    f" nearest dt multiple {snapped:.6g}; exceeds 0.5% of tau"
                )

    @property
    def delay_steps(self) -> int:
        return int(round(self.tau / self.dt)) if self.tau > 0 else 0

    @property
    def tau_snapped(self) -> float:
        return self.delay_steps * self.dt

    def to_dict(self) -> dict[str, Any]:
        return {
            "tau": self.tau,
            "dt": self.dt,
            "burn_in": self.burn_in,
            "horizon": self.horizon,
            "n_traj": self.n_traj,
            "seed": self.seed,
            "scheme": self.scheme,
        }


@dataclass(frozen=True)
class SimResult:
    """Steady-state dispersion estimate from one Monte Carlo run.

    ``rho_hat`` is exactly the sum of ``per_node_var``; ``std_err`` is the
    standard error of the per-trajectory means (NaN for a single
    trajectory).  ``per_traj_mean`` is kept for paired estimators and is
    not serialized.
    """

    rho_hat: float
    std_err: float
    per_node_var: np.ndarray
    effective_samples: int
    tau_snapped: float
    config: SimConfig
    per_traj_mean: np.ndarray

    def to_dict(self) -> dict[str, Any]:
        return {
            "rho_hat": self.rho_hat,
            "std_err": self.std_err,
            "per_node_var": [float(v) for v in self.per_node_var],
            "effective_samples": self.effective_samples,
            "tau_snapped": self.tau_snapped,
            "config": self.config.to_dict(),
        }


def _trajectory_generators(seed: int, n_traj: int) -> list[np.random.Generator]:
    return [
        np.random.Generator(np.random.Philox(key=(seed ^ t) & (2**64 - 1)))
        for t in range(n_traj)
    ]


def _check_finite(x: np.ndarray, step: int) -> None:
    if not np.isfinite(x).all() or np.max(np.abs(x)) > _DIVERGENCE_LIMIT:
        raise SimulationError(f"numerically unstable run: state blew up at step {step}")


def _finish(
    sum_sq_node: np.ndarray,
    sum_sq_traj: np.ndarray,
    meas_steps: int,
    cfg: SimConfig,
) -> SimResult:
    n_traj = cfg.n_traj
    per_node_var = sum_sq_node / (meas_steps * n_traj)
    per_traj_mean = sum_sq_traj / meas_steps
    rho_hat = float(per_node_var.sum())
    if n_traj > 1:
        std_err = float(np.std(per_traj_mean, ddof=1) / math.sqrt(n_traj))
    else:
        std_err = float("nan")
    return SimResult(
        rho_hat=rho_hat,
        std_err=std_err,
        per_node_var=per_node_var,
        effective_samples=meas_steps * n_traj,
        tau_snapped=cfg.tau_snapped,
        config=cfg,
        per_traj_mean=per_traj_mean,
    )


def simulate(
    gm: GraphMatrices,
    b: np.ndarray,
    variances: np.ndarray,
    cfg: SimConfig,
) -> SimResult:
    """Euler-Maruyama on ``dx = -L x(t - tau) dt + B diag(sigma) dW``.

    Zero pre-history on [-tau, 0); output ``y = x - mean(x)``; the
    dispersion estimate averages ``|y|^2`` over the horizon after burn-in
    and across trajectories (accumulated in fixed trajectory order).
    """
    lap = gm.laplacian
    n = gm.n
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[0] != n:
        raise ValueError(f"input matrix must have {n} rows, got shape {b.shape}")
    variances = np.asarray(variances, dtype=float)
    if variances.shape != (b.shape[1],):
        raise ValueError(
            f"variance vector of shape {variances.shape} does not match {b.shape[1]} channels"
        )
    if (variances < 0).any():
        raise ValueError("variances must be nonnegative")
    dec = decompose(lap, require_connected=True)
    info = stability_margin(dec, cfg.tau)
    if not info.stable:
        raise StabilityError(cfg.tau, info.tau_max)

    b_sigma = b * np.sqrt(variances)[None, :]

    def mix_noise(z: np.ndarray) -> np.ndarray:
        # (steps, channels, traj) white increments -> per-state forcing
        return np.einsum("nm,smt->snt", b_sigma, z)

    return _run_euler_maruyama(
        cfg,
        n_state=n,
        n_channels=b.shape[1],
        mix_noise=mix_noise,
        step_fn=lambda x, x_del, forcing: x - cfg.dt * (lap @ x_del) + forcing,
        observe_rows=slice(0, n),
    )


def simulate_second_order(
    gm: GraphMatrices,
    b_gain: float,
    variances: np.ndarray,
    cfg: SimConfig,
) -> SimResult:
    """Euler-Maruyama on the position/velocity consensus model.

    Positions integrate velocities; velocities see delayed Laplacian
    feedback on both states (velocity gain ``b_gain``) plus per-agent white
    noise.  The observed dispersion is that of the centered positions.
    """
    if not (b_gain > 0):
        raise ValueError(f"velocity gain must be positive, got {b_gain}")
    lap = gm.laplacian
    n = gm.n
    variances = np.asarray(variances, dtype=float)
    if variances.shape != (n,):
        raise ValueError(f"variance vector of shape {variances.shape}, expected ({n},)")
    decompose(lap, require_connected=True)
    sigma = np.sqrt(variances)

    def mix_noise(z: np.ndarray) -> np.ndarray:
        forcing = np.zeros((z.shape[0], 2 * n, z.shape[2]))
        forcing[:, n:, :] = sigma[None, :, None] * z
        return forcing

    def step(state, state_del, forcing):
        new = np.empty_like(state)
        new[:n] = state[:n] + cfg.dt * state[n:]
        new[n:] = (
            state[n:]
            - cfg.dt * (lap @ state_del[:n] + b_gain * (lap @ state_del[n:]))
            + forcing[n:]
        )
        return new

    return _run_euler_maruyama(
        cfg,
        n_state=2 * n,
        n_channels=n,
        mix_noise=mix_noise,
        step_fn=step,
        observe_rows=slice(0, n),
    )


def _run_euler_maruyama(
    cfg: SimConfig, n_state, n_channels, mix_noise, step_fn, observe_rows
) -> SimResult:
    """Shared stepping loop: ring-buffered delay, chunked per-trajectory noise.

    Noise is pre-mixed into per-state forcing one chunk at a time, and
    measurement is vectorized over the chunk's recorded states, so the
    sequential inner loop touches only the delay recursion itself.
    """
    dt = cfg.dt
    d = cfg.delay_steps
    burn_steps = int(round(cfg.burn_in / dt))
    meas_steps = int(round(cfg.horizon / dt))
    total_steps = burn_steps + meas_steps
    n_traj = cfg.n_traj
    gens = _trajectory_generators(cfg.seed, n_traj)
    sqrt_dt = math.sqrt(dt)

    history = np.zeros((d + 1, n_state, n_traj))
    state = history[0]
    n_obs = len(range(*observe_rows.indices(n_state)))
    sum_sq_node = np.zeros(n_obs)
    sum_sq_traj = np.zeros(n_traj)

    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while step < total_steps:
            chunk = min(_NOISE_CHUNK, total_steps - step)
            z = np.empty((chunk, n_channels, n_traj))
            for t, gen in enumerate(gens):
                z[:, :, t] = gen.standard_normal((chunk, n_channels))
            forcing = mix_noise(z * sqrt_dt)
            recorded = np.empty((chunk, n_obs, n_traj))
            for s in range(chunk):
                slot = (step + 1) % (d + 1)
                delayed = history[slot]  # holds the state d steps back (0 pre-history)
                state = step_fn(state, delayed, forcing[s])
                history[slot] = state
                recorded[s] = state[observe_rows]
                step += 1
            _check_finite(state, step)
            first_measured = max(0, burn_steps - (step - chunk))
            if first_measured < chunk:
                y = recorded[first_measured:]
                y = y - y.mean(axis=1, keepdims=True)
                ysq = y**2
                sum_sq_node += ysq.sum(axis=(0, 2))
                sum_sq_traj += ysq.sum(axis=(0, 1))
    return _finish(sum_sq_node, sum_sq_traj, meas_steps, cfg)


@dataclass(frozen=True)
class McNodeCentrality:
    """Finite-difference Monte Carlo estimate of node centralities."""

    eta_hat: np.ndarray
    std_err: np.ndarray


def mc_node_centrality(
    gm: GraphMatrices,
    structure: NoiseStructure,
    tau: float,
    cfg: SimConfig,
    delta: float = 0.5,
) -> McNodeCentrality:
    """Estimate each channel's centrality by a paired variance perturbation.

    Runs the simulator twice per channel with variances ``1 +/- delta`` on
    that channel and the same noise stream (common random numbers), and
    takes the per-trajectory central difference.  Since the dispersion is
    linear in the variances, the estimator is unbiased for any ``delta``.
    """
    if not (0 < delta < 1):
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if cfg.tau != tau:
        cfg = SimConfig(
            tau=tau, dt=cfg.dt, burn_in=cfg.burn_in, horizon=cfg.horizon,
            n_traj=cfg.n_traj, seed=cfg.seed, scheme=cfg.scheme,
        )
    b = input_matrix(gm, structure)
    m = noise_channels(gm, structure)
    eta = np.empty(m)
    err = np.empty(m)
    for i in range(m):
        plus = np.ones(m)
        minus = np.ones(m)
        plus[i] += delta
        minus[i] -= delta
        res_plus = simulate(gm, b, plus, cfg)
        res_minus = simulate(gm, b, minus, cfg)
        diffs = (res_plus.per_traj_mean - res_minus.per_traj_mean) / (2.0 * delta)
        eta[i] = float(diffs.mean())
        err[i] = (
            float(np.std(diffs, ddof=1) / math.sqrt(cfg.n_traj))
            if cfg.n_traj > 1
            else float("nan")
        )
    return McNodeCentrality(eta_hat=eta, std_err=err)

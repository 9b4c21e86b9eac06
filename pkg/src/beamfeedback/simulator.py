"""Slot-level Monte Carlo evaluation of feedback policies.

Trajectories follow the first-order channel recursion; the controller sees
the binned state and decides feedback per slot, while throughput accrues
with the true power and alignment.  The beam only changes on feedback, so
whole trajectories are precomputed and the policy is applied by scanning
blocks between feedback events.  All randomness derives from one trajectory
seed, giving common random numbers across policies, prices, and baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .channel import FadingParams, _as_rng, _complex_normal
from .codebook import epsilon_statistics, quantize_shape
from .mdp import (
    Policy,
    RewardSpec,
    average_reward,
    extract_threshold,
    policy_iteration_average,
)
from .state_grid import GridSpec, estimate_transition_model, make_grid

__all__ = [
    "TrajectoryConfig",
    "EvalResult",
    "CurvePoint",
    "Curve",
    "simulate_policy",
    "simulate_periodic",
    "periodic_baseline",
    "sweep_alpha",
    "average_threshold",
    "refinement_study",
    "curve_to_csv",
]

_BLOCK = 256
_BATCHES = 100

CSV_HEADER = "alpha,net,throughput,feedback_rate,avg_threshold,stderr"


@dataclass(frozen=True)
class TrajectoryConfig:
    """Length, warmup discard, and seed of one simulated run."""

    slots: int
    warmup: int = 1000
    seed: int | None = None

    def __post_init__(self):
        slots, warmup = int(self.slots), int(self.warmup)
        if slots < 1:
            raise ValueError("slots must be positive")
        if warmup < 0 or warmup >= slots:
            raise ValueError("warmup must be nonnegative and smaller than slots")
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "warmup", warmup)


@dataclass(frozen=True)
class EvalResult:
    """Measured throughput, feedback rate, net reward, and its standard error."""

    throughput: float
    feedback_rate: float
    net: float
    stderr: float

    def __post_init__(self):
        if not 0.0 <= self.feedback_rate <= 1.0:
            raise ValueError("feedback rate must lie in [0, 1]")


@dataclass(frozen=True)
class CurvePoint:
    """One price point of a sweep; avg_threshold is NaN off threshold policies."""

    alpha: float
    net: float
    throughput: float
    feedback_rate: float
    avg_threshold: float
    stderr: float


@dataclass(frozen=True)
class Curve:
    """Sweep records ordered by strictly increasing price."""

    points: tuple

    def __post_init__(self):
        pts = tuple(self.points)
        alphas = [p.alpha for p in pts]
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ValueError("curve prices must be strictly increasing")
        object.__setattr__(self, "points", pts)


def _streams(seed, tag: int):
    """Independent generator for one purpose of a seeded run."""
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng([int(seed), tag])


def _trajectory(params: FadingParams, config: TrajectoryConfig):
    """Channel power, unit shapes, and an initial beam for a whole run.

    The recursion is linear in the driving noise, so the run is one filter
    pass per antenna; the policy cannot influence the channel, which lets
    every policy share the same trajectory for a given seed.
    """
    rng = _streams(config.seed, 0)
    T = config.slots
    L = params.L
    h0 = _complex_normal(rng, (L,))
    f0 = _complex_normal(rng, (L,))
    f0 /= np.linalg.norm(f0)
    rho = params.rho
    H = np.empty((T, L), dtype=complex)
    H[0] = h0
    if T > 1:
        drive = math.sqrt(1.0 - rho * rho) * _complex_normal(rng, (T - 1, L))
        H[1:], _ = signal.lfilter([1.0], [1.0, -rho], drive, axis=0,
                                  zi=(rho * h0)[None, :])
    g = np.einsum("tl,tl->t", H.conj(), H).real
    S = H / np.sqrt(g)[:, None]
    return g, S, f0


def _batch_stderr(series: np.ndarray, batches: int = _BATCHES) -> float:
    """Batch-means standard error of the mean of a correlated series."""
    b = min(batches, series.size)
    if b < 2:
        return 0.0
    n = (series.size // b) * b
    means = series[:n].reshape(b, -1).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(b))


def _aggregate(g, z, fb, rewards: RewardSpec, config: TrajectoryConfig) -> EvalResult:
    rate = np.log2(1.0 + rewards.P * g * z)
    post = slice(config.warmup, None)
    throughput = float(rate[post].mean())
    feedback_rate = float(fb[post].mean())
    net = throughput - rewards.alpha * feedback_rate
    series = rate[post] - rewards.alpha * fb[post]
    return EvalResult(throughput=throughput, feedback_rate=feedback_rate,
                      net=net, stderr=_batch_stderr(series))


def _quantize_rows(S: np.ndarray, codebook):
    """Codebook quantization of many shapes at once: (codewords, eps)."""
    scores = np.abs(S @ codebook.vectors.conj().T) ** 2
    idx = np.argmax(scores, axis=1)
    return codebook.vectors[idx], np.minimum(scores[np.arange(S.shape[0]), idx], 1.0)


def simulate_policy(policy: Policy, spec: GridSpec, params: FadingParams,
                    rewards: RewardSpec, config: TrajectoryConfig,
                    codebook=None) -> EvalResult:
    """Run a feedback policy over one simulated trajectory.

    Each slot the true state is binned, the policy consulted, and on
    feedback the beam is set to the current shape (or its codebook
    quantization) within the same slot, so the slot's alignment is already
    the realigned one.  Throughput always uses the true channel.
    """
    decide = policy.decide
    if decide.shape != (spec.M, spec.N):
        raise ValueError("policy dimensions do not match the grid")
    g, S, f = _trajectory(params, config)
    T = config.slots
    z = np.empty(T)
    fb = np.zeros(T, dtype=bool)
    if not decide.any():
        z[:] = np.minimum(np.abs(S.conj() @ f) ** 2, 1.0)
    elif decide.all():
        fb[:] = True
        if codebook is None:
            z[:] = 1.0
        else:
            _, z[:] = _quantize_rows(S, codebook)
    else:
        m_idx = np.minimum(np.searchsorted(spec.g_edges, g, side="right") - 1,
                           spec.M - 1)
        t = 0
        while t < T:
            end = min(T, t + _BLOCK)
            blk = np.minimum(np.abs(S[t:end].conj() @ f) ** 2, 1.0)
            n_blk = np.minimum(
                np.searchsorted(spec.z_edges, blk, side="right") - 1, spec.N - 1)
            hit = decide[m_idx[t:end], n_blk]
            if not hit.any():
                z[t:end] = blk
                t = end
                continue
            j = int(np.argmax(hit))
            z[t:t + j] = blk[:j]
            t += j
            if codebook is None:
                f = S[t]
                z[t] = 1.0
            else:
                f, z[t] = quantize_shape(S[t], codebook)
            fb[t] = True
            t += 1
    return _aggregate(g, z, fb, rewards, config)


def _periodic_eval(period: int, traj, rewards: RewardSpec,
                   config: TrajectoryConfig, codebook) -> EvalResult:
    g, S, _ = traj
    T = config.slots
    z = np.empty(T)
    fb = np.zeros(T, dtype=bool)
    fb[::period] = True
    anchors = S[::period]
    if codebook is None:
        A = anchors
    else:
        A, _ = _quantize_rows(anchors, codebook)
    nseg, rem = divmod(T, period)
    if nseg:
        body = S[:nseg * period].conj().reshape(nseg, period, -1)
        z[:nseg * period] = np.abs(
            np.einsum("skl,sl->sk", body, A[:nseg])).reshape(-1) ** 2
    if rem:
        z[nseg * period:] = np.abs(S[nseg * period:].conj() @ A[nseg]) ** 2
    np.minimum(z, 1.0, out=z)
    if codebook is None:
        z[::period] = 1.0  # realigned in the feedback slot itself
    return _aggregate(g, z, fb, rewards, config)


def simulate_periodic(period: int, spec: GridSpec, params: FadingParams,
                      rewards: RewardSpec, config: TrajectoryConfig,
                      codebook=None) -> EvalResult:
    """Feedback every ``period`` slots regardless of state."""
    if int(period) < 1:
        raise ValueError("period must be positive")
    traj = _trajectory(params, config)
    return _periodic_eval(int(period), traj, rewards, config, codebook)


def periodic_baseline(spec: GridSpec, params: FadingParams, rewards: RewardSpec,
                      max_period: int, config: TrajectoryConfig, codebook=None):
    """Best fixed feedback interval in 1..max_period on one shared trajectory.

    Returns (best_period, EvalResult); ties go to the shorter interval.  The
    grid plays no role here and is accepted for interface symmetry.
    """
    if int(max_period) < 1:
        raise ValueError("max_period must be positive")
    traj = _trajectory(params, config)
    best = None
    for k in range(1, int(max_period) + 1):
        res = _periodic_eval(k, traj, rewards, config, codebook)
        if best is None or res.net > best[1].net:
            best = (k, res)
    return best


def average_threshold(profile, pi) -> float:
    """Occupancy-weighted feedback threshold over the power bins."""
    if not profile.is_threshold:
        raise ValueError("average threshold needs a threshold policy")
    y = np.asarray(profile.y, dtype=float)
    marginal = pi.pi.sum(axis=1)
    if marginal.shape != y.shape:
        raise ValueError("occupancy and threshold sizes do not match")
    return float(min(1.0, max(0.0, marginal @ y)))


def sweep_alpha(alphas, spec: GridSpec, params: FadingParams,
                rewards: RewardSpec, config: TrajectoryConfig, codebook=None,
                model_samples: int = 1_000_000) -> Curve:
    """Solve and evaluate the controller across feedback prices.

    One transition model (and, with a codebook, one set of quantized-rate
    statistics) serves every price; each price is solved exactly on the
    model and then measured on the common simulated trajectory.
    """
    alphas = [float(a) for a in alphas]
    if any(b <= a for a, b in zip(alphas, alphas[1:])) or not alphas:
        raise ValueError("alphas must be nonempty and strictly increasing")
    model = estimate_transition_model(params, spec, model_samples,
                                      _streams(config.seed, 1),
                                      codebook=codebook)
    eps = None
    if codebook is not None:
        eps = epsilon_statistics(codebook, params.L, rewards.P, spec.g_points,
                                 model_samples, _streams(config.seed, 2))
    quantized = codebook is not None
    points = []
    for a in alphas:
        r = RewardSpec(P=rewards.P, alpha=a)
        solved = policy_iteration_average(model, r, spec, eps=eps,
                                          quantized_row=quantized)
        measured = simulate_policy(solved.policy, spec, params, r, config,
                                   codebook=codebook)
        profile = extract_threshold(solved.policy, spec)
        avg_y = average_threshold(profile, solved.pi) if profile.is_threshold \
            else math.nan
        points.append(CurvePoint(alpha=a, net=measured.net,
                                 throughput=measured.throughput,
                                 feedback_rate=measured.feedback_rate,
                                 avg_threshold=avg_y, stderr=measured.stderr))
    return Curve(points=tuple(points))


def refinement_study(sizes, params: FadingParams, rewards: RewardSpec,
                     config: TrajectoryConfig):
    """Model-based gain at increasing grid resolutions.

    Monte Carlo budgets scale with the grid so that binning error, not
    estimation noise, dominates the differences.  Returns [(M, N, J), ...].
    """
    sizes = [(int(M), int(N)) for M, N in sizes]
    if not sizes or any(m2 * n2 <= m1 * n1 for (m1, n1), (m2, n2)
                        in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be nonempty and increasing")
    out = []
    for i, (M, N) in enumerate(sizes):
        rng = _streams(config.seed, 3 + i)
        samples = max(1000 * max(M, N), config.slots * max(M, N) // 16)
        spec = make_grid(params.L, M, N, samples, rng)
        model = estimate_transition_model(params, spec, samples, rng)
        J = policy_iteration_average(model, rewards, spec).J
        out.append((M, N, float(J)))
    return out


def curve_to_csv(curve: Curve) -> str:
    """Render a sweep as comma-separated text with a fixed header."""
    lines = [CSV_HEADER]
    for p in curve.points:
        vals = (p.alpha, p.net, p.throughput, p.feedback_rate,
                p.avg_threshold, p.stderr)
        lines.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"

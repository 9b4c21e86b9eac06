"""Average-reward control of the feedback decision on the binned state space.

Each slot the controller either requests feedback (beam realigned this slot,
price charged) or keeps the stale beam.  Stage reward is spectral efficiency
minus the price; the solvers maximize its long-run average.  A discounted
value iteration and an exhaustive search over threshold policies are provided
as independent cross-checks of the primary policy-iteration path.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .state_grid import GridSpec, StationaryDistribution, TransitionModel

__all__ = [
    "RewardSpec",
    "Policy",
    "ThresholdProfile",
    "ValueTable",
    "SolveResult",
    "ConvergenceError",
    "SingularChainError",
    "reward_per_stage",
    "reward_per_stage_quantized",
    "dp_operator",
    "value_iteration_discounted",
    "relative_value_iteration",
    "expected_continuation",
    "policy_iteration_average",
    "stationary_distribution",
    "average_reward",
    "extract_threshold",
    "threshold_lower_bound",
    "exhaustive_threshold_search",
    "solve_result_to_json",
    "policy_from_json",
]


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class SingularChainError(RuntimeError):
    """The induced chain has no unique stationary solution."""


@dataclass(frozen=True)
class RewardSpec:
    """Link SNR and the per-feedback price.

    The price can be given directly or derived from a feedback budget: when
    ``feedback_bits``, ``slot_time`` and ``coherence_time`` are all present,
    alpha must equal feedback_bits * slot_time / coherence_time.
    """

    P: float
    alpha: float = None
    feedback_bits: float = None
    slot_time: float = None
    coherence_time: float = None

    def __post_init__(self):
        if not (self.P > 0.0 and math.isfinite(self.P)):
            raise ValueError("SNR P must be positive and finite")
        budget = (self.feedback_bits, self.slot_time, self.coherence_time)
        if all(v is not None for v in budget):
            derived = self.feedback_bits * self.slot_time / self.coherence_time
            if self.alpha is None:
                object.__setattr__(self, "alpha", derived)
            elif abs(self.alpha - derived) > 1e-12:
                raise ValueError("alpha disagrees with the feedback budget")
        if self.alpha is None:
            raise ValueError("either alpha or a complete feedback budget is required")
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            raise ValueError("price alpha must be nonnegative and finite")

    @classmethod
    def from_snr_db(cls, snr_db: float, **kwargs) -> "RewardSpec":
        return cls(P=10.0 ** (snr_db / 10.0), **kwargs)


@dataclass(frozen=True)
class Policy:
    """Feedback decision per (power bin, alignment bin); True requests feedback."""

    decide: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.decide, dtype=bool)
        if d.ndim != 2:
            raise ValueError("decision table must be 2-D over (power, alignment) bins")
        d.setflags(write=False)
        object.__setattr__(self, "decide", d)


@dataclass(frozen=True)
class ThresholdProfile:
    """Per-power-bin alignment threshold; feedback below the threshold.

    ``y`` holds bin-edge values; when ``is_threshold`` is true the policy is
    exactly decide[m][n] = (z_points[n] < y[m]).
    """

    y: np.ndarray
    is_threshold: bool


@dataclass(frozen=True)
class ValueTable:
    """State values under a discount factor beta."""

    V: np.ndarray
    beta: float

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.ndim != 2:
            raise ValueError("value table must be 2-D over (power, alignment) bins")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("discount factor must lie in [0, 1)")
        object.__setattr__(self, "V", V)


@dataclass(frozen=True)
class SolveResult:
    """Optimal policy with its gain J, differential values A, and occupancy."""

    policy: Policy
    J: float
    A: np.ndarray
    iterations: int
    pi: StationaryDistribution


def reward_per_stage(gbar, zbar, mu: int, rewards: RewardSpec):
    """Stage reward at representative state (gbar, zbar) under decision mu.

    Feedback realigns the beam within the slot, so its reward uses perfect
    alignment and subtracts the price.
    """
    if mu not in (0, 1):
        raise ValueError("decision mu must be 0 or 1")
    gbar = np.asarray(gbar, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    if np.any(gbar < 0) or np.any((zbar < 0) | (zbar > 1)):
        raise ValueError("gbar must be nonnegative and zbar must lie in [0, 1]")
    if mu:
        out = np.log2(1.0 + rewards.P * gbar) - rewards.alpha
    else:
        out = np.log2(1.0 + rewards.P * gbar * zbar)
    return float(out) if out.ndim == 0 else out


def _eps_rate(eps, gbar: float) -> float:
    pts = np.asarray(eps.g_points, dtype=float)
    hits = np.nonzero(np.isclose(pts, gbar, rtol=1e-9, atol=1e-12))[0]
    if hits.size == 0:
        raise ValueError(f"no quantized-rate entry for power point {gbar}")
    return float(np.asarray(eps.per_g_rate, dtype=float)[hits[0]])


def reward_per_stage_quantized(gbar, zbar, mu: int, rewards: RewardSpec, eps):
    """Stage reward when feedback returns a codebook-quantized beam.

    The feedback branch uses the precomputed expectation of the quantized
    alignment rate at ``gbar``; the no-feedback branch is unchanged.
    """
    if mu not in (0, 1):
        raise ValueError("decision mu must be 0 or 1")
    if mu:
        return _eps_rate(eps, float(gbar)) - rewards.alpha
    return reward_per_stage(gbar, zbar, 0, rewards)


def _stage_tables(spec: GridSpec, rewards: RewardSpec, eps):
    """Reward tables on the grid: G0 over (m, n), G1 over m only."""
    G0 = np.log2(1.0 + rewards.P * spec.g_points[:, None] * spec.z_points[None, :])
    if eps is None:
        G1 = np.log2(1.0 + rewards.P * spec.g_points) - rewards.alpha
    else:
        G1 = np.array([_eps_rate(eps, g) for g in spec.g_points]) - rewards.alpha
    return G0, G1


def _feedback_vector(model: TransitionModel, quantized_row: bool) -> np.ndarray:
    if quantized_row:
        if model.Peps1_row is None:
            raise ValueError("model carries no quantized feedback row")
        return model.Peps1_row
    return model.P1_row


def expected_continuation(V, model: TransitionModel, m: int, n: int, mu: int,
                          quantized_row: bool = False) -> float:
    """Expected next-slot value from state (m, n) under decision mu.

    After feedback the alignment destination law no longer depends on n.
    """
    arr = np.asarray(getattr(V, "V", V), dtype=float)
    if mu not in (0, 1):
        raise ValueError("decision mu must be 0 or 1")
    row = _feedback_vector(model, quantized_row) if mu else model.P0[n]
    return float(model.Ptilde[m] @ (arr @ row))


def dp_operator(V: ValueTable, model: TransitionModel, rewards: RewardSpec,
                spec: GridSpec, eps=None, quantized_row: bool = False) -> ValueTable:
    """One sweep of the discounted Bellman maximization.

    Feedback is chosen only when strictly better, so ties keep the beam.
    """
    G0, G1 = _stage_tables(spec, rewards, eps)
    p1 = _feedback_vector(model, quantized_row)
    W0 = model.Ptilde @ V.V @ model.P0.T
    W1 = model.Ptilde @ (V.V @ p1)
    Q0 = G0 + V.beta * W0
    Q1 = G1[:, None] + V.beta * W1[:, None]
    return ValueTable(V=np.where(Q1 > Q0, Q1, Q0), beta=V.beta)


def value_iteration_discounted(model: TransitionModel, rewards: RewardSpec,
                               spec: GridSpec, beta: float, tol: float = 1e-10,
                               max_iter: int = 100_000, eps=None,
                               quantized_row: bool = False) -> ValueTable:
    """Iterate the discounted operator to its fixed point (sup-norm stop)."""
    V = ValueTable(V=np.zeros((spec.M, spec.N)), beta=beta)
    residual = math.inf
    for _ in range(max_iter):
        nxt = dp_operator(V, model, rewards, spec, eps, quantized_row)
        residual = float(np.max(np.abs(nxt.V - V.V)))
        V = nxt
        if residual <= tol:
            return V
    raise ConvergenceError("discounted value iteration did not converge", residual)


def _policy_transition(decide: np.ndarray, model: TransitionModel,
                       p1: np.ndarray) -> np.ndarray:
    """Full state transition matrix induced by a decision table."""
    M, N = decide.shape
    Pz = np.where(decide[:, :, None], p1[None, None, :], model.P0[None, :, :])
    return np.einsum("mk,mnl->mnkl", model.Ptilde, Pz).reshape(M * N, M * N)


def _evaluate_policy(decide: np.ndarray, model: TransitionModel, G0: np.ndarray,
                     G1: np.ndarray, p1: np.ndarray):
    """Solve gain J and differential values A for a fixed policy.

    The linear system pins the last state's differential value to zero.
    """
    M, N = decide.shape
    T = _policy_transition(decide, model, p1)
    Gpi = np.where(decide, G1[:, None], G0).ravel()
    size = M * N
    sys = np.zeros((size + 1, size + 1))
    sys[:size, :size] = np.eye(size) - T
    sys[:size, size] = 1.0
    sys[size, size - 1] = 1.0
    rhs = np.append(Gpi, 0.0)
    try:
        x = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularChainError(f"policy evaluation system is singular: {exc}") from exc
    return float(x[size]), x[:size].reshape(M, N)


def policy_iteration_average(model: TransitionModel, rewards: RewardSpec,
                             spec: GridSpec, max_iter: int = 50, eps=None,
                             quantized_row: bool = False) -> SolveResult:
    """Howard policy iteration on the average-reward criterion.

    Exact linear-solve evaluation alternates with a greedy improvement that
    requests feedback only on strict improvement.  Terminates when the policy
    repeats; the returned A solves the evaluation equations of that policy.
    """
    G0, G1 = _stage_tables(spec, rewards, eps)
    p1 = _feedback_vector(model, quantized_row)
    decide = G1[:, None] > G0
    for it in range(1, max_iter + 1):
        J, A = _evaluate_policy(decide, model, G0, G1, p1)
        Q0 = G0 + model.Ptilde @ A @ model.P0.T
        Q1 = G1[:, None] + (model.Ptilde @ (A @ p1))[:, None]
        improved = Q1 > Q0
        if np.array_equal(improved, decide):
            pi = stationary_distribution(Policy(decide), model, quantized_row)
            return SolveResult(policy=Policy(decide), J=J, A=A, iterations=it, pi=pi)
        decide = improved
    raise ConvergenceError("policy iteration did not settle", residual=math.inf)


def relative_value_iteration(model: TransitionModel, rewards: RewardSpec,
                             spec: GridSpec, tol: float = 1e-10,
                             max_iter: int = 200_000, eps=None,
                             quantized_row: bool = False):
    """Undiscounted value iteration with the last state as offset anchor.

    Cross-check for the policy-iteration gain; returns (J, A).
    """
    G0, G1 = _stage_tables(spec, rewards, eps)
    p1 = _feedback_vector(model, quantized_row)
    h = np.zeros((spec.M, spec.N))
    residual = math.inf
    for _ in range(max_iter):
        Q0 = G0 + model.Ptilde @ h @ model.P0.T
        Q1 = G1[:, None] + (model.Ptilde @ (h @ p1))[:, None]
        Th = np.where(Q1 > Q0, Q1, Q0)
        J = Th[-1, -1]
        nxt = Th - J
        residual = float(np.max(np.abs(nxt - h)))
        h = nxt
        if residual <= tol:
            return float(J), h
    raise ConvergenceError("relative value iteration did not converge", residual)


def stationary_distribution(policy: Policy, model: TransitionModel,
                            quantized_row: bool = False) -> StationaryDistribution:
    """Long-run state occupancy under a fixed policy.

    Solved linearly with one balance equation replaced by normalization, then
    verified against the transition operator by power iteration.
    """
    decide = policy.decide
    M, N = decide.shape
    if model.P0.shape[0] != N or model.Ptilde.shape[0] != M:
        raise ValueError("policy shape does not match the model")
    T = _policy_transition(decide, model, _feedback_vector(model, quantized_row))
    size = M * N
    sys = T.T - np.eye(size)
    sys[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularChainError(f"stationary system is singular: {exc}") from exc
    if pi.min() < -1e-10:
        raise SingularChainError("stationary solve produced negative occupancy")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    probe = pi.copy()
    for _ in range(50):
        probe = probe @ T
    if np.max(np.abs(probe - pi)) > 1e-8:
        raise SingularChainError("stationary solution is not stable under iteration")
    return StationaryDistribution(pi.reshape(M, N))


def average_reward(policy: Policy, model: TransitionModel, rewards: RewardSpec,
                   spec: GridSpec, eps=None, quantized_row: bool = False) -> float:
    """Occupancy-weighted stage reward of a fixed policy."""
    G0, G1 = _stage_tables(spec, rewards, eps)
    pi = stationary_distribution(policy, model, quantized_row)
    Gpi = np.where(policy.decide, G1[:, None], G0)
    return float(np.sum(pi.pi * Gpi))


def extract_threshold(policy: Policy, spec: GridSpec) -> ThresholdProfile:
    """Read per-power-bin thresholds off a decision table.

    Each row should request feedback exactly below some alignment edge; the
    reported threshold is that edge.  Rows that set feedback above a gap make
    the profile non-threshold; their entry still reports the leading run.
    """
    decide = policy.decide
    if decide.shape[1] + 1 != spec.z_edges.size or decide.shape[0] != spec.M:
        raise ValueError("policy shape does not match the grid")
    y = np.empty(spec.M)
    ok = True
    for m in range(spec.M):
        row = decide[m]
        lead = row.size if row.all() else int(np.argmin(row))
        if row[lead:].any():
            ok = False
        y[m] = spec.z_edges[lead]
    return ThresholdProfile(y=y, is_threshold=ok)


def threshold_lower_bound(gbar: float, P: float, alpha: float) -> float:
    """Alignment level below which feedback pays for itself within the slot.

    Clipped to zero; zero power never justifies feedback.
    """
    if gbar < 0 or P <= 0 or alpha < 0:
        raise ValueError("gbar must be nonnegative, P positive, alpha nonnegative")
    if gbar == 0.0:
        return 0.0
    val = (2.0 ** (-alpha) * (1.0 + P * gbar) - 1.0) / (P * gbar)
    return max(0.0, val)


def exhaustive_threshold_search(model: TransitionModel, rewards: RewardSpec,
                                spec: GridSpec, eps=None,
                                quantized_row: bool = False,
                                max_candidates: int = 1_000_000) -> SolveResult:
    """Evaluate every admissible threshold vector and keep the best.

    Candidate thresholds live on the alignment bin edges, with each component
    cut below by the per-stage bound less half a bin (grid-resolution optima
    can sit that far under the continuous-state bound).  Intended as an
    independent oracle for small grids; the candidate count is guarded.
    """
    G0, G1 = _stage_tables(spec, rewards, eps)
    p1 = _feedback_vector(model, quantized_row)
    candidates = []
    slack = 0.5 / spec.N + 1e-12
    for m in range(spec.M):
        lb = threshold_lower_bound(float(spec.g_points[m]), rewards.P, rewards.alpha)
        allowed = [n for n in range(spec.N + 1) if spec.z_edges[n] >= lb - slack]
        candidates.append(allowed)
    total = math.prod(len(c) for c in candidates)
    if total > max_candidates:
        raise ValueError(
            f"{total} threshold candidates exceed the search guard; use policy iteration"
        )
    best = None
    evaluated = 0
    for combo in itertools.product(*candidates):
        y = spec.z_edges[list(combo)]
        decide = spec.z_points[None, :] < y[:, None]
        J, A = _evaluate_policy(decide, model, G0, G1, p1)
        evaluated += 1
        if best is None or J > best[0]:
            best = (J, decide, A)
    J, decide, A = best
    policy = Policy(decide)
    pi = stationary_distribution(policy, model, quantized_row)
    return SolveResult(policy=policy, J=J, A=A, iterations=evaluated, pi=pi)


def solve_result_to_json(result: SolveResult, spec: GridSpec) -> str:
    """Serialize a solve: 0/1 policy rows, thresholds, gain, occupancy."""
    profile = extract_threshold(result.policy, spec)
    doc = {
        "policy": result.policy.decide.astype(int).tolist(),
        "threshold": [float(v) for v in profile.y],
        "is_threshold": profile.is_threshold,
        "J": result.J,
        "iterations": result.iterations,
        "pi": result.pi.pi.tolist(),
    }
    return json.dumps(doc, indent=2)


def policy_from_json(text: str) -> Policy:
    """Read back the decision table of a serialized solve."""
    doc = json.loads(text)
    return Policy(np.asarray(doc["policy"], dtype=bool))

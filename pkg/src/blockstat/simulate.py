"""Exact continuous-time jump-chain simulators.

Gillespie-style simulation of the Moran block counting chain, the
general-measure block counting chain, the killed ancestral selection
graph (absorption frequencies), and the Moran type-frequency chain.
Each path records its seed and RNG algorithm; identical seeds give
bit-identical paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, EmptyPath, NonAbsorbing, RateOverflow
from .measures import LambdaMeasure, ModelParams, MoranParams, lambda_rate

DELTA = -1  # cemetery marker of the killed ASG
RATE_CAP = 1e12
RNG_ALGORITHM = "PCG64"
STATE_CACHE_CAP = 10_000


@dataclass
class JumpPath:
    """Piecewise-constant trajectory: states[i] held for holding_times[i].

    The final entry is the sojourn drawn in the last visited state (or
    +inf at an absorbing state).  DELTA appears only as the final state
    and only for the killed ASG.
    """

    states: np.ndarray
    holding_times: np.ndarray
    seed: int
    model_tag: str
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        if self.states.shape != self.holding_times.shape:
            raise DomainError("states and holding times must align")

    @property
    def n_events(self) -> int:
        return self.states.size - 1

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("state,holding_time\n")
            for s, h in zip(self.states, self.holding_times):
                fh.write(f"{int(s)},{float(h)!r}\n")


@dataclass
class OccupancyEstimate:
    """Time-weighted empirical distribution of a jump path."""

    weights: dict[int, float]
    total_time: float
    n_events: int

    def distribution(self) -> dict[int, float]:
        return {k: w / self.total_time for k, w in self.weights.items()}

    def tv_distance(self, probs: np.ndarray) -> float:
        """Total variation distance to a pmf indexed from state 1."""
        dist = self.distribution()
        states = set(dist) | set(range(1, probs.size + 1))
        return 0.5 * sum(
            abs(dist.get(k, 0.0) - (probs[k - 1] if 1 <= k <= probs.size else 0.0))
            for k in states
        )

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("state,weight\n")
            for s in sorted(self.weights):
                fh.write(f"{s},{float(self.weights[s])!r}\n")


class _BlockRng:
    """Pre-drawn exponential/uniform blocks over a PCG64 stream."""

    def __init__(self, seed: int, block: int = 1 << 14):
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.block = block
        self._exp = self.rng.exponential(size=block)
        self._uni = self.rng.random(size=block)
        self._i = 0

    def draw(self) -> tuple[float, float]:
        if self._i >= self.block:
            self._exp = self.rng.exponential(size=self.block)
            self._uni = self.rng.random(size=self.block)
            self._i = 0
        i = self._i
        self._i = i + 1
        return self._exp[i], self._uni[i]


TableFn = Callable[[int], tuple[np.ndarray, np.ndarray, float]]


def _run_chain(
    table_for: TableFn,
    start: int,
    max_events: int,
    rng: _BlockRng,
    tag: str,
    seed: int,
) -> JumpPath:
    """Simulate a jump chain from cached per-state rate tables.

    table_for(k) returns (targets, cumulative_rates, total_rate); a zero
    total rate marks an absorbing state (recorded with infinite sojourn).
    """
    states = np.empty(max_events + 1, dtype=np.int64)
    holds = np.empty(max_events + 1, dtype=float)
    cache: dict[int, tuple[np.ndarray, np.ndarray, float]] = {}
    state = start
    n = 0
    while True:
        entry = cache.get(state)
        if entry is None:
            entry = table_for(state)
            if entry[2] > RATE_CAP:
                raise RateOverflow(
                    f"exit rate {entry[2]:.3e} from state {state} exceeds cap"
                )
            if len(cache) < STATE_CACHE_CAP:
                cache[state] = entry
        targets, cum, total = entry
        if total == 0.0:
            states[n] = state
            holds[n] = math.inf
            n += 1
            break
        e, u = rng.draw()
        states[n] = state
        holds[n] = e / total
        n += 1
        if n > max_events:
            break
        state = int(targets[np.searchsorted(cum, u * total, side="right")])
    return JumpPath(states[:n].copy(), holds[:n].copy(), seed, tag)


# ----------------------------------------------------------------------
# Rate tables
# ----------------------------------------------------------------------


def moran_L_rates(params: MoranParams, i: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Targets and cumulative rates of the Moran block counting chain."""
    N, s, u0, u1 = params.N, params.s, params.u0, params.u1
    targets = []
    rates = []
    for j in range(1, i - 1):
        targets.append(j)
        rates.append(u0)
    if i >= 2:
        targets.append(i - 1)
        rates.append(i * (i - 1) / N + (i - 1) * u1 + u0)
    if i < N:
        targets.append(i + 1)
        rates.append(i * (N - i) * s / N)
    t = np.array(targets, dtype=np.int64)
    r = np.array(rates, dtype=float)
    return t, np.cumsum(r), float(r.sum())


def lambda_L_rates(
    measure: LambdaMeasure, params: ModelParams, k: int
) -> tuple[np.ndarray, np.ndarray, float]:
    """Targets and cumulative rates of the general block counting chain.

    From k: coalescence to l < k at binom(k, k-l+1) lambda_{k,k-l+1},
    beneficial mutation at theta0 to every l < k, pruning at (k-1) theta1
    to k-1, branching at k sigma to k+1.
    """
    sigma, th0, th1 = params.sigma, params.theta0, params.theta1
    rates = np.empty(k, dtype=float)
    for ell in range(1, k):
        rates[ell - 1] = (
            math.comb(k, k - ell + 1) * lambda_rate(measure, k, k - ell + 1) + th0
        )
    if k >= 2:
        rates[k - 2] += (k - 1) * th1
    rates[k - 1] = k * sigma
    targets = np.arange(1, k + 1, dtype=np.int64)
    targets[k - 1] = k + 1
    return targets, np.cumsum(rates), float(rates.sum())


def killed_asg_rates(
    measure: LambdaMeasure, params: ModelParams, k: int
) -> tuple[np.ndarray, np.ndarray, float]:
    """Killed-ASG rates: branch k sigma, prune k theta1, kill k theta0 to DELTA."""
    sigma, th0, th1 = params.sigma, params.theta0, params.theta1
    targets = list(range(0, k)) + [k + 1, DELTA]
    rates = np.zeros(k + 2, dtype=float)
    for ell in range(1, k):
        rates[ell] = math.comb(k, k - ell + 1) * lambda_rate(measure, k, k - ell + 1)
    rates[k - 1] += k * th1  # prune to k-1 (to 0 when k = 1)
    rates[k] = k * sigma
    rates[k + 1] = k * th0
    t = np.array(targets, dtype=np.int64)
    keep = rates > 0.0
    r = rates[keep]
    return t[keep], np.cumsum(r), float(r.sum())


def moran_X_rates(params: MoranParams, k: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Birth-death rates of the Moran type-frequency chain on 0..N."""
    N, s, u0, u1 = params.N, params.s, params.u0, params.u1
    lam = k * (N - k) * (1.0 + s) / N + (N - k) * u0 if k < N else 0.0
    mu = k * (N - k) / N + k * u1 if k > 0 else 0.0
    targets = []
    rates = []
    if mu > 0:
        targets.append(k - 1)
        rates.append(mu)
    if lam > 0:
        targets.append(k + 1)
        rates.append(lam)
    t = np.array(targets, dtype=np.int64)
    r = np.array(rates, dtype=float)
    return t, np.cumsum(r), float(r.sum())


# ----------------------------------------------------------------------
# Public simulators
# ----------------------------------------------------------------------


def simulate_moran_L(
    params: MoranParams, start: int, max_events: int, seed: int
) -> JumpPath:
    """Exact path of the Moran block counting chain."""
    if not 1 <= start <= params.N:
        raise DomainError("start must lie in 1..N")
    rng = _BlockRng(seed)
    return _run_chain(
        lambda i: moran_L_rates(params, i), start, max_events, rng, "moran-L", seed
    )


def simulate_lambda_L(
    measure: LambdaMeasure,
    params: ModelParams,
    start: int,
    max_events: int,
    seed: int,
) -> JumpPath:
    """Exact path of the general-measure block counting chain."""
    if start < 1:
        raise DomainError("start must be a positive block count")
    rng = _BlockRng(seed)
    return _run_chain(
        lambda k: lambda_L_rates(measure, params, k),
        start,
        max_events,
        rng,
        "lambda-L",
        seed,
    )


def simulate_moran_X(
    params: MoranParams, start: int, max_events: int, seed: int
) -> JumpPath:
    """Exact path of the Moran type-frequency chain (absorbs when u0 or u1 is 0)."""
    if not 0 <= start <= params.N:
        raise DomainError("start must lie in 0..N")
    rng = _BlockRng(seed)
    return _run_chain(
        lambda k: moran_X_rates(params, k), start, max_events, rng, "moran-X", seed
    )


def simulate_killed_asg(
    measure: LambdaMeasure,
    params: ModelParams,
    start: int,
    n_reps: int,
    seed: int,
    max_events_per_rep: int = 10_000_000,
) -> float:
    """Fraction of killed-ASG replicates absorbed at 0 (rather than killed).

    Estimates the stationary moment w_start = P_start(R_inf = 0);
    requires both mutation rates positive so absorption is certain.
    """
    if params.theta0 <= 0 or params.theta1 <= 0:
        raise DomainError("killed-ASG absorption needs theta0 > 0 and theta1 > 0")
    if start < 1:
        raise DomainError("start must be a positive line count")
    rng = _BlockRng(seed)
    cache: dict[int, tuple[np.ndarray, np.ndarray, float]] = {}
    absorbed_zero = 0
    for _ in range(n_reps):
        state = start
        for _step in range(max_events_per_rep):
            entry = cache.get(state)
            if entry is None:
                entry = killed_asg_rates(measure, params, state)
                if entry[2] > RATE_CAP:
                    raise RateOverflow(f"exit rate from state {state} exceeds cap")
                if len(cache) < STATE_CACHE_CAP:
                    cache[state] = entry
            targets, cum, total = entry
            _, u = rng.draw()
            state = int(targets[np.searchsorted(cum, u * total, side="right")])
            if state == 0:
                absorbed_zero += 1
                break
            if state == DELTA:
                break
        else:
            raise NonAbsorbing(
                f"replicate exceeded {max_events_per_rep} events without absorbing"
            )
    return absorbed_zero / n_reps


def occupancy(path: JumpPath, burn_in_fraction: float = 0.2) -> OccupancyEstimate:
    """Time-weighted state histogram after discarding initial burn-in time.

    burn_in_fraction removes that fraction of the total simulated time
    from the front (clipping the straddling sojourn).
    """
    if not 0.0 <= burn_in_fraction < 1.0:
        raise DomainError("burn_in_fraction must lie in [0, 1)")
    finite = np.isfinite(path.holding_times)
    if not np.any(finite):
        raise EmptyPath("path has no finite sojourns")
    states = path.states[finite]
    holds = path.holding_times[finite]
    total = float(holds.sum())
    if total <= 0.0:
        raise EmptyPath("path carries no simulated time")
    cutoff = burn_in_fraction * total
    t_seen = np.concatenate([[0.0], np.cumsum(holds)])
    weights: dict[int, float] = {}
    for s, t0, t1 in zip(states, t_seen[:-1], t_seen[1:]):
        if t1 <= cutoff:
            continue
        w = t1 - max(t0, cutoff)
        key = int(s)
        weights[key] = weights.get(key, 0.0) + w
    return OccupancyEstimate(weights, total - cutoff, path.n_events)


def lambda_L_exit_rate(measure: LambdaMeasure, params: ModelParams, k: int) -> float:
    """Closed-form total exit rate from state k, for table validation."""
    sigma, th0, th1 = params.sigma, params.theta0, params.theta1
    coal = sum(
        math.comb(k, k - ell + 1) * lambda_rate(measure, k, k - ell + 1)
        for ell in range(1, k)
    )
    return k * sigma + (k - 1) * th1 + (k - 1) * th0 + coal

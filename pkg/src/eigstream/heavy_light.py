"""Heavy/light decomposition: the general single-pass estimator.

For each guess g of ||A||_F^2 (2x ladder), rows with ||a||^2 >= g / D are
heavy and stored exactly, where D = d * log(d)^k. Light rows are row-norm
sampled at p = ||a||^2 / (g / D), so every survivor has squared norm g / D and
the block power method can run with eta = 1. A Gaussian sketch of all rows
picks the final estimate among the heavy top eigenvector and the block-power
iterates of the lane whose guess matches the final Frobenius mass.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .block_power import collect_candidates, init_lanes, make_params
from .errors import ContractViolation, NoCandidate
from .linalg import exact_top_eigens, unit
from .report import RunReport
from .sampling import DEFAULT_C_SAMPLE, GaussianSketch, bernoulli_rescale, default_ladder, ladder_for, log_factor
from .stream import StreamStats

DEFAULT_POLYLOG_EXPONENT = 4.0


def heavy_denominator(d, polylog_exponent=DEFAULT_POLYLOG_EXPONENT):
    """D = d * log(d)^k; the default heavy-store budget is 2D."""
    return d * log_factor(d) ** polylog_exponent


def heavy_threshold(frob_sq_guess, d, polylog_exponent=DEFAULT_POLYLOG_EXPONENT):
    if not frob_sq_guess > 0:
        raise ContractViolation("frob_sq_guess must be positive")
    return frob_sq_guess / heavy_denominator(d, polylog_exponent)


def classify_row(row, frob_sq_guess, d, polylog_exponent=DEFAULT_POLYLOG_EXPONENT):
    row = np.asarray(row, dtype=np.float64)
    norm_sq = float(row @ row)
    return "heavy" if norm_sq >= heavy_threshold(frob_sq_guess, d, polylog_exponent) else "light"


class RowPool:
    """Reference-counted row copies shared by every lane's heavy store."""

    def __init__(self):
        self._rows = {}
        self._refs = {}
        self.peak = 0

    def __len__(self):
        return len(self._rows)

    def acquire(self, keys, rows):
        for key, row in zip(keys, rows):
            key = int(key)
            if key in self._refs:
                self._refs[key] += 1
            else:
                self._rows[key] = row.copy()
                self._refs[key] = 1
        self.peak = max(self.peak, len(self._rows))

    def release(self, keys):
        for key in keys:
            self._refs[key] -= 1
            if self._refs[key] == 0:
                del self._refs[key]
                del self._rows[key]

    def get(self, keys):
        return np.array([self._rows[k] for k in keys])


class HeavyStore:
    """Exact copies of the rows at or above ``threshold_sq``, at most ``budget``."""

    def __init__(self, threshold_sq, budget, pool=None):
        self.threshold_sq = threshold_sq
        self.budget = int(budget)
        self.pool = RowPool() if pool is None else pool
        self.keys = []
        self.peak = 0
        self.overflowed = False
        self._next_key = 0

    def __len__(self):
        return len(self.keys)

    def add(self, rows, keys=None):
        """Store rows; returns False (and empties the store) on overflow."""
        rows = np.atleast_2d(rows)
        if self.overflowed:
            return False
        if keys is None:
            keys = range(self._next_key, self._next_key + rows.shape[0])
            self._next_key += rows.shape[0]
        keys = [int(k) for k in keys]
        if len(self.keys) + len(keys) > self.budget:
            self.overflowed = True
            self.release()
            return False
        self.pool.acquire(keys, rows)
        self.keys.extend(keys)
        self.peak = max(self.peak, len(self.keys))
        return True

    def release(self):
        self.pool.release(self.keys)
        self.keys = []

    @property
    def rows(self):
        return self.pool.get(self.keys)


def heavy_branch_vector(store):
    """Exact top eigenvector of the stored rows' Gram matrix."""
    if len(store) == 0:
        raise NoCandidate("heavy store is empty")
    return exact_top_eigens(store.rows).v1


@dataclass(frozen=True)
class HeavyLightParams:
    R_hint: float = None
    beta: float = None
    alpha: float = None
    polylog_exponent: float = DEFAULT_POLYLOG_EXPONENT
    frob_floor: float = None
    frob_cap: float = None
    ladder_power: float = 4.0
    budget: int = None
    C1: float = 3.0
    C2: float = 8.0
    C_sample: float = DEFAULT_C_SAMPLE
    eps_bp: float = None
    light_n: int = None
    rho_grid: tuple = None
    eps_jl: float = None
    C_jl: float = 1.0
    chunk: int = 256
    heavy_store: bool = True

    def __post_init__(self):
        if self.R_hint is not None and not self.R_hint > 1:
            raise ContractViolation("R_hint must exceed 1")
        for name in ("beta", "alpha", "C1", "C2", "C_sample", "C_jl", "ladder_power"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ContractViolation(f"{name} must be positive")
        if self.polylog_exponent < 0:
            raise ContractViolation("polylog_exponent must be >= 0")
        if self.chunk < 1:
            raise ContractViolation("chunk must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise ContractViolation("budget must be >= 1")
        if self.R_hint is not None and self.resolved_beta * self.R_hint < 1:
            raise ContractViolation("beta * R must be >= 1 for the light-branch analysis")

    @property
    def resolved_beta(self):
        if self.beta is not None:
            return self.beta
        return None if self.R_hint is None else 1.0 / math.sqrt(self.R_hint)

    @property
    def resolved_alpha(self):
        if self.alpha is not None:
            return self.alpha
        return None if self.R_hint is None else 1.0 / math.sqrt(self.R_hint)

    def to_dict(self):
        out = asdict(self)
        out["resolved_beta"] = self.resolved_beta
        out["resolved_alpha"] = self.resolved_alpha
        return out


class _FrobLane:
    def __init__(self, index, guess, d, params, budget, pool, bp, rngs):
        self.index = index
        self.guess = guess
        self.tau = heavy_threshold(guess, d, params.polylog_exponent)
        self.store = HeavyStore(self.tau, budget, pool)
        self.rng = rngs[-1]
        self.bp_lanes, self.bp_infos = init_lanes(bp, rngs[:-1])
        self.status = "alive"
        self.light_rows = 0
        self.sampled_rows = 0
        self.forced_rows = 0
        self.sampled_norm_range = [math.inf, 0.0]

    def kill(self, status):
        self.status = status
        self.store.release()
        self.bp_lanes = [None] * len(self.bp_lanes)

    def feed(self, rows, norms_sq, keys, use_store):
        if use_store:
            heavy = norms_sq >= self.tau
            if heavy.any() and not self.store.add(rows[heavy], keys[heavy]):
                self.kill("heavy_overflow")
                return
            light = ~heavy
            rows, norms_sq = rows[light], norms_sq[light]
        if rows.shape[0] == 0:
            return
        self.light_rows += rows.shape[0]
        p = np.minimum(1.0, norms_sq / self.tau)
        self.forced_rows += int(np.count_nonzero(p >= 1.0))
        kept, keep = bernoulli_rescale(rows, p, self.rng)
        if kept.shape[0] == 0:
            return
        self.sampled_rows += kept.shape[0]
        kn = np.einsum("ij,ij->i", kept, kept)
        self.sampled_norm_range[0] = min(self.sampled_norm_range[0], float(kn.min()))
        self.sampled_norm_range[1] = max(self.sampled_norm_range[1], float(kn.max()))
        for lane in self.bp_lanes:
            if lane is not None and not lane.done:
                lane.step_rows(kept)

    def summary(self):
        return {
            "index": self.index,
            "frob_sq_guess": self.guess,
            "threshold_sq": self.tau,
            "status": self.status,
            "heavy_rows": len(self.store),
            "heavy_peak": self.store.peak,
            "light_rows": self.light_rows,
            "sampled_rows": self.sampled_rows,
        }


def run_heavy_light(stream, params=None, rng=None):
    """Single-pass top-eigenvector estimate; returns (v_hat, RunReport)."""
    params = HeavyLightParams() if params is None else params
    rng = np.random.default_rng() if rng is None else rng
    d, n = stream.d, stream.n
    D = heavy_denominator(d, params.polylog_exponent)
    # a lane with g <= ||A||_F^2 < 2g can see up to 2D rows above g / D
    budget = params.budget if params.budget is not None else math.ceil(2 * D)
    if params.frob_floor is not None or params.frob_cap is not None:
        base = default_ladder(n or 1, d, params.ladder_power)
        ladder = ladder_for(params.frob_floor or base.floor_value, params.frob_cap or base.cap_value)
    else:
        ladder = default_ladder(n or math.ceil(D), d, params.ladder_power)

    light_n = params.light_n or min(n or math.ceil(D), math.ceil(D))
    bp = make_params(light_n, d, eps=params.eps_bp, eta=1.0, C1=params.C1, C2=params.C2,
                     rho_grid=params.rho_grid)
    children = rng.spawn(len(ladder) + 1)
    sketch = GaussianSketch(d, children[-1], eps_jl=params.eps_jl, C_jl=params.C_jl,
                            n_candidates=1 + len(bp.rho_grid))
    pool = RowPool()
    lanes = [
        _FrobLane(i, g, d, params, budget, pool, bp, children[i].spawn(len(bp.rho_grid) + 1))
        for i, g in enumerate(ladder)
    ]

    stats = StreamStats()
    alive = list(lanes)
    pos = 0
    for rows in stream.chunks(params.chunk):
        norms_sq = stats.update(rows)
        sketch.update(rows)
        keys = np.arange(pos, pos + rows.shape[0])
        pos += rows.shape[0]
        for lane in alive:
            if 2 * lane.guess <= stats.frob_sq:
                lane.kill("frob_guess_low")
            else:
                lane.feed(rows, norms_sq, keys, params.heavy_store)
        alive = [lane for lane in alive if lane.status == "alive"]

    frob_sq = stats.frob_sq
    for lane in alive:
        if lane.guess > frob_sq:
            lane.status = "frob_guess_high"
    valid = [lane for lane in alive if lane.status == "alive"]
    if not valid:
        raise NoCandidate(
            f"no Frobenius lane survived (||A||_F^2 = {frob_sq:.6g}, ladder "
            f"[{ladder.floor_value:.3g}, {ladder.cap_value:.3g}])"
        )
    lane = valid[0]
    lane.status = "valid"

    labels, vectors = [], []
    if params.heavy_store and len(lane.store):
        labels.append({"branch": "heavy", "frob_lane": lane.index})
        vectors.append(heavy_branch_vector(lane.store))
    light = collect_candidates(lane.bp_lanes, lane.bp_infos, bp)
    for rho, z in light.items():
        labels.append({"branch": "light", "frob_lane": lane.index, "rho": rho})
        vectors.append(z)
    if not vectors:
        raise NoCandidate("matching Frobenius lane produced no heavy rows and no complete block")
    scores = sketch.scores(np.array(vectors))
    best = int(np.argmax(scores))
    v_hat = unit(vectors[best])

    flags = []
    if lane.forced_rows:
        flags.append("eta_equalization_broken")
    if any(i and i.get("degenerate_blocks") for i in lane.bp_infos):
        flags.append("degenerate_block")
    if any(i and i.get("status") == "truncated" for i in lane.bp_infos):
        flags.append("truncated_lane")
    lo, hi = lane.sampled_norm_range
    unrefuted = [x for x in lanes if x.status in ("valid", "frob_guess_high")]
    report = RunReport(
        algorithm="heavy_light",
        winner_branch=labels[best]["branch"],
        winner_lane=labels[best],
        estimate=v_hat,
        lanes=[x.summary() for x in lanes],
        rows_read=stats.rows_seen,
        rows_stored_peak=pool.peak,
        sketch_dims=sketch.dims,
        params=params.to_dict(),
        flags=flags,
        extra={
            "frob_sq": frob_sq,
            "heavy_denominator": D,
            "budget": budget,
            "valid_lane": lane.index,
            "valid_lane_heavy_rows": len(lane.store),
            "unrefuted_lane_peak_sum": sum(x.store.peak for x in unrefuted),
            "light_sampling_eps_vs_frob": math.sqrt(params.C_sample * log_factor(d) / D),
            "light_eta_measured": hi / lo if lo < math.inf and lo > 0 else None,
            "block_power": {
                "n": bp.n, "t": bp.t, "eps": bp.eps, "alpha": bp.alpha,
                "lanes": lane.bp_infos,
            },
            "candidates": [dict(lbl, score=float(s)) for lbl, s in zip(labels, scores)],
        },
    )
    return v_hat, report

"""Block power method over disjoint Binomial-sized blocks of a random-order stream.

Each stable-rank guess rho runs its own lane. Group g covers stream rows
[g*G, (g+1)*G) with G = floor(2 n p); only the first y_g ~ Bin(n, p) rows of
the group enter the block, and the iterate is multiplied by that block's Gram
matrix at the group boundary. All lanes share one pass (and one sketch).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NoCandidate
from .linalg import gaussian_vector, gram_apply, unit
from .sampling import GaussianSketch, log_factor

DEFAULT_C1 = 3.0
DEFAULT_C2 = 8.0
_FEAS_RTOL = 1e-12


def rho_grid_for(d):
    """Stable-rank guesses 1, 2, 4, ... up to d."""
    grid = [1]
    while grid[-1] * 2 <= d:
        grid.append(grid[-1] * 2)
    return tuple(grid)


def iterations_for(d, C1=DEFAULT_C1):
    return max(1, math.ceil(C1 * log_factor(d)))


def derived_eps(n, d, t, C2=DEFAULT_C2, eta=1.0, rho_max=None):
    """Smallest eps for which the largest rho lane still has p <= 1/(5t)."""
    if rho_max is None:
        rho_max = rho_grid_for(d)[-1]
    return math.sqrt(5.0 * t * C2 * eta * rho_max * log_factor(d) / n)


@dataclass(frozen=True)
class BlockPowerParams:
    d: int
    n: int
    t: int
    eps: float
    eta: float = 1.0
    C2: float = DEFAULT_C2
    rho_grid: tuple = ()

    def __post_init__(self):
        if self.t < 1:
            raise ContractViolation("t must be >= 1")
        if not self.eps > 0:
            raise ContractViolation("eps must be positive")
        if self.eta < 1:
            raise ContractViolation("eta bounds a max/min ratio and must be >= 1")
        if not self.rho_grid:
            object.__setattr__(self, "rho_grid", rho_grid_for(self.d))

    def p(self, rho):
        return self.C2 * self.eta * rho * log_factor(self.d) / (self.n * self.eps**2)

    def feasible(self, rho):
        return self.p(rho) <= (1.0 + _FEAS_RTOL) / (5 * self.t)

    @property
    def alpha(self):
        """Accuracy implied by eps = alpha^2 / log^2 d (constant taken as 1)."""
        return log_factor(self.d) * math.sqrt(self.eps)


def make_params(n, d, eps=None, eta=1.0, C1=DEFAULT_C1, C2=DEFAULT_C2, rho_grid=None):
    """Parameters for a stream of n rows; eps defaults to :func:`derived_eps`."""
    if n < 1:
        raise ContractViolation("stream length must be >= 1")
    grid = tuple(rho_grid) if rho_grid else rho_grid_for(d)
    t = iterations_for(d, C1)
    if eps is None:
        eps = derived_eps(n, d, t, C2, eta, grid[-1])
    return BlockPowerParams(d=d, n=n, t=t, eps=eps, eta=eta, C2=C2, rho_grid=grid)


@dataclass(frozen=True)
class BlockPlan:
    group_size: int
    lengths: tuple
    aborted: bool

    @property
    def starts(self):
        return tuple(j * self.group_size for j in range(len(self.lengths)))


def plan_blocks(n, p, t, rng):
    """Draw y_1..y_t ~ Bin(n, p); the plan aborts if any y_j exceeds 2np."""
    group = math.floor(2 * n * p)
    lengths = rng.binomial(n, min(max(p, 0.0), 1.0), size=t)
    aborted = bool(np.any(lengths > 2 * n * p)) or group == 0
    return BlockPlan(group, tuple(int(y) for y in lengths), aborted)


class BlockPowerLane:
    """State machine for one rho lane.

    ``z`` is unit norm at every group boundary; ``acc`` collects B_j^T B_j z
    while the current group's block is being read.
    """

    def __init__(self, plan, z0, rho=None, keep_history=False):
        self.plan = plan
        self.rho = rho
        self.z = unit(z0)
        self.acc = np.zeros_like(self.z)
        self.j = 0
        self.pos = 0
        self.rows_in_blocks = 0
        self.degenerate_blocks = 0
        self.aborted = plan.aborted
        self.history = [self.z.copy()] if keep_history else None

    @property
    def t(self):
        return len(self.plan.lengths)

    @property
    def done(self):
        return self.aborted or self.j >= self.t

    @property
    def status(self):
        if self.aborted:
            return "aborted"
        return "complete" if self.j >= self.t else "truncated"

    def step(self, row):
        self.step_rows(np.asarray(row)[None, :])

    def step_rows(self, rows):
        G = self.plan.group_size
        i, m = 0, rows.shape[0]
        while i < m and not self.done:
            y = self.plan.lengths[self.j]
            take = min(G - self.pos, m - i)
            hi = min(self.pos + take, y)
            if hi > self.pos:
                X = rows[i: i + hi - self.pos]
                self.acc += X.T @ (X @ self.z)
                self.rows_in_blocks += X.shape[0]
            self.pos += take
            i += take
            if self.pos == G:
                self._close_block()

    def _close_block(self):
        nrm = np.linalg.norm(self.acc)
        if nrm > 0 and np.isfinite(nrm):
            self.z = self.acc / nrm
        else:
            # empty block or block orthogonal to z: identity step
            self.degenerate_blocks += 1
        self.acc = np.zeros_like(self.z)
        self.j += 1
        self.pos = 0
        if self.history is not None:
            self.history.append(self.z.copy())

    def summary(self):
        return {
            "rho": self.rho,
            "status": self.status,
            "blocks_done": self.j,
            "group_size": self.plan.group_size,
            "rows_in_blocks": self.rows_in_blocks,
            "degenerate_blocks": self.degenerate_blocks,
        }


@dataclass
class BoundedNormResult:
    winner: np.ndarray
    winner_rho: int
    candidates: dict
    scores: dict
    lanes: list
    rows_read: int
    params: BlockPowerParams
    sketch_dims: tuple = field(default=(0, 0))


def init_lanes(params, rngs, keep_history=False):
    """One lane per rho (``None`` where infeasible) plus their status records."""
    lanes, infos = [], []
    for rho, child in zip(params.rho_grid, rngs):
        if not params.feasible(rho):
            infos.append({"rho": rho, "status": "infeasible", "p": params.p(rho)})
            lanes.append(None)
            continue
        plan = plan_blocks(params.n, params.p(rho), params.t, child)
        lanes.append(BlockPowerLane(plan, gaussian_vector(params.d, child), rho, keep_history))
        infos.append(None)
    return lanes, infos


def collect_candidates(lanes, infos, params):
    """Final z per lane that finished at least one block; fills ``infos``."""
    candidates = {}
    for k, lane in enumerate(lanes):
        if lane is None:
            continue
        info = lane.summary()
        info["p"] = params.p(lane.rho)
        infos[k] = info
        if lane.aborted or lane.j == 0:
            continue
        candidates[lane.rho] = lane.z
    return candidates


def run_bounded_norm(stream, params, rng, sketch=None, chunk=256, keep_history=False):
    """Algorithm for streams whose squared row norms are within a factor eta.

    Returns the lane estimates and the one maximizing ||G A z||.
    """
    d = stream.d
    if d != params.d:
        raise ContractViolation(f"stream dimension {d} != params.d {params.d}")
    children = rng.spawn(len(params.rho_grid) + 1)
    if sketch is None:
        sketch = GaussianSketch(d, children[-1], n_candidates=len(params.rho_grid))
    lanes, infos = init_lanes(params, children, keep_history)

    active = [lane for lane in lanes if lane is not None and not lane.done]
    rows_read = 0
    for rows in stream.chunks(chunk):
        rows_read += rows.shape[0]
        sketch.update(rows)
        for lane in active:
            lane.step_rows(rows)

    candidates = collect_candidates(lanes, infos, params)
    if not candidates:
        raise NoCandidate("every rho lane aborted, was infeasible or saw no complete block")
    scores = {rho: sketch.score(z) for rho, z in candidates.items()}
    # ties go to the lowest rho
    best = max(scores, key=lambda r: (scores[r], -r))
    return BoundedNormResult(
        winner=candidates[best],
        winner_rho=best,
        candidates=candidates,
        scores=scores,
        lanes=infos,
        rows_read=rows_read,
        params=params,
        sketch_dims=sketch.dims,
    )


def apply_blocks(blocks, z0):
    """Normalized (B_t^T B_t) ... (B_1^T B_1) z0 for explicit blocks."""
    z = unit(z0)
    for B in blocks:
        z = unit(gram_apply(B, z))
    return z

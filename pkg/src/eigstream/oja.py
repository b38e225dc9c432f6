"""Oja's algorithm over a learning-rate grid, with the largest-norm fallback,
and the row-norm subsample-then-Oja wrapper."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, NoCandidate
from .linalg import gaussian_vector, unit
from .sampling import (
    DEFAULT_C_SAMPLE,
    GaussianSketch,
    SamplerConfig,
    bernoulli_rescale,
    default_ladder,
    log_factor,
    sample_probability,
)
from .stream import StreamStats

DEFAULT_ETA_MAX = 2.0**20
DEFAULT_ETA_MIN = 2.0**-10


def default_eta_grid(eta_max=DEFAULT_ETA_MAX, eta_min=DEFAULT_ETA_MIN):
    """Powers of two from eta_min up to eta_max inclusive."""
    if not 0 < eta_min <= eta_max:
        raise ContractViolation("need 0 < eta_min <= eta_max")
    lo, hi = math.ceil(math.log2(eta_min)), math.floor(math.log2(eta_max))
    return tuple(2.0**k for k in range(lo, hi + 1))


class OjaState:
    """All learning rates advanced together from one shared start z0.

    The iterate of lane k is ``direction[k] * exp(log_norm[k])``; keeping the
    magnitude in log space avoids overflow for large eta.
    """

    def __init__(self, eta_grid, z0):
        self.etas = np.asarray(eta_grid, dtype=np.float64)
        if self.etas.ndim != 1 or self.etas.size == 0:
            raise ContractViolation("eta grid must be a nonempty sequence")
        if np.any(self.etas < 0):
            raise ContractViolation("learning rates must be non-negative")
        self.z0 = np.asarray(z0, dtype=np.float64).copy()
        nrm = np.linalg.norm(self.z0)
        self.log_norm0 = math.log(nrm)
        self.direction = np.tile(self.z0 / nrm, (self.etas.size, 1))
        self.log_norm = np.full(self.etas.size, self.log_norm0)
        self.max_norm_sq = -1.0
        self.max_norm_row = np.zeros_like(self.z0)
        self.rows_seen = 0

    def update_rows(self, rows):
        rows = np.atleast_2d(rows)
        norms_sq = np.einsum("ij,ij->i", rows, rows)
        if norms_sq.size:
            k = int(np.argmax(norms_sq))
            if norms_sq[k] > self.max_norm_sq:
                self.max_norm_sq = float(norms_sq[k])
                self.max_norm_row = rows[k].copy()
        Z, etas = self.direction, self.etas
        for a in rows:
            Z += np.outer(etas * (Z @ a), a)
            nrm = np.sqrt(np.einsum("ij,ij->i", Z, Z))
            Z /= nrm[:, None]
            self.log_norm += np.log(nrm)
        self.rows_seen += rows.shape[0]

    def result(self):
        fallback = unit(self.max_norm_row) if self.max_norm_sq > 0 else None
        return OjaResult(
            etas=self.etas.copy(),
            vectors=self.direction.copy(),
            log_norm=self.log_norm.copy(),
            log_growth=self.log_norm - self.log_norm0,
            z0=self.z0.copy(),
            fallback=fallback,
            rows_read=self.rows_seen,
        )


@dataclass
class OjaResult:
    etas: np.ndarray
    vectors: np.ndarray
    log_norm: np.ndarray
    log_growth: np.ndarray
    z0: np.ndarray
    fallback: np.ndarray
    rows_read: int

    def iterate(self, k):
        """The unnormalized final iterate z_n of lane k (may overflow)."""
        return self.vectors[k] * math.exp(self.log_norm[k])


def oja_pass(stream, eta_grid=None, rng=None, chunk=256):
    """One pass of Oja's update z <- z + eta <z, a> a for every eta in the grid."""
    rng = np.random.default_rng() if rng is None else rng
    eta_grid = default_eta_grid() if eta_grid is None else eta_grid
    state = OjaState(eta_grid, gaussian_vector(stream.d, rng))
    for rows in stream.chunks(chunk):
        state.update_rows(rows)
    return state.result()


def select_by_growth(result, tau=None):
    """Smallest eta whose log growth log(||z_n|| / ||z_0||) reaches tau, else
    the largest-norm row. Returns (vector, info)."""
    if tau is None:
        tau = log_factor(result.z0.size)
    order = np.argsort(result.etas, kind="stable")
    for k in order:
        if result.log_growth[k] >= tau:
            return result.vectors[k], {"eta": float(result.etas[k]), "fallback": False, "tau": tau}
    if result.fallback is None:
        raise NoCandidate("no learning rate grew enough and the stream had no nonzero row")
    return result.fallback, {"eta": None, "fallback": True, "tau": tau}


@dataclass
class SubsampleOjaResult:
    winner: np.ndarray
    winner_label: dict
    eps: float
    lanes: list
    candidates: list
    rows_read: int
    sketch_dims: tuple


def subsample_then_oja(stream, R_hint, rng, eta_grid=None, C_sample=DEFAULT_C_SAMPLE,
                       ladder=None, eps_jl=None, C_jl=1.0, chunk=256):
    """Row-norm sample at eps = 1/(2 R_hint) for every ||A||^2 guess, run Oja on
    each sampled substream, and return the sketch argmax over all iterates.

    Guesses below max(max row norm^2, ||A||_F^2 / d) / 2 or above ||A||_F^2 are
    refuted by the pass itself and dropped.
    """
    if not R_hint >= 1:
        raise ContractViolation("R_hint must be >= 1")
    eps = 1.0 / (2.0 * R_hint)
    d = stream.d
    eta_grid = default_eta_grid() if eta_grid is None else tuple(eta_grid)
    ladder = default_ladder(stream.n or 1, d) if ladder is None else ladder
    children = rng.spawn(len(ladder) + 1)
    n_cand = (len(eta_grid) + 1) * (math.ceil(math.log2(d)) + 2)
    sketch = GaussianSketch(d, children[-1], eps_jl=eps_jl, C_jl=C_jl, n_candidates=n_cand)

    lanes = []
    for g, child in zip(ladder, children):
        cfg = SamplerConfig(eps, g, d, C_sample)
        lanes.append({"cfg": cfg, "rng": child, "oja": OjaState(eta_grid, gaussian_vector(d, child)),
                      "status": "alive", "sampled": 0, "expected": 0.0})
    stats = StreamStats()
    alive = list(lanes)
    for rows in stream.chunks(chunk):
        norms_sq = stats.update(rows)
        floor = max(stats.max_row_norm_sq, stats.frob_sq / d)
        for lane in alive:
            cfg = lane["cfg"]
            if 2 * cfg.opnorm_sq_guess < floor:
                lane["status"] = "opnorm_guess_low"
                lane["oja"] = None
                continue
            p = sample_probability(norms_sq, cfg)
            lane["expected"] += float(p.sum())
            kept, _ = bernoulli_rescale(rows, p, lane["rng"])
            lane["sampled"] += kept.shape[0]
            if kept.shape[0]:
                lane["oja"].update_rows(kept)
        alive = [lane for lane in alive if lane["status"] == "alive"]
        sketch.update(rows)

    labels, vectors = [], []
    for i, lane in enumerate(lanes):
        if lane["status"] != "alive":
            continue
        if lane["cfg"].opnorm_sq_guess > stats.frob_sq:
            lane["status"] = "opnorm_guess_high"
            continue
        lane["status"] = "valid"
        res = lane["oja"].result()
        for k, eta in enumerate(res.etas):
            labels.append({"lane": i, "eta": float(eta)})
            vectors.append(res.vectors[k])
        if res.fallback is not None:
            labels.append({"lane": i, "eta": None})
            vectors.append(res.fallback)
    if not vectors:
        raise NoCandidate("no opnorm guess survived the pass")
    scores = sketch.scores(np.array(vectors))
    best = int(np.argmax(scores))
    summaries = [
        {"opnorm_sq_guess": lane["cfg"].opnorm_sq_guess, "status": lane["status"],
         "sampled_rows": lane["sampled"], "expected_rows": lane["expected"]}
        for lane in lanes
    ]
    return SubsampleOjaResult(
        winner=unit(vectors[best]),
        winner_label=labels[best],
        eps=eps,
        lanes=summaries,
        candidates=[dict(lbl, score=float(s)) for lbl, s in zip(labels, scores)],
        rows_read=stats.rows_seen,
        sketch_dims=sketch.dims,
    )

"""Row-norm sampling, guess ladders and the Gaussian sketch G*A."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .linalg import UNIT_TOL
from .stream import SubStream

DEFAULT_C_SAMPLE = 8.0


def log_factor(d):
    """Natural log of the dimension, floored at 1 so tiny d never zeroes it."""
    return max(math.log(d), 1.0)


@dataclass(frozen=True)
class SamplerConfig:
    eps: float
    opnorm_sq_guess: float
    d: float
    C_sample: float = DEFAULT_C_SAMPLE

    def __post_init__(self):
        if not self.eps > 0:
            raise ContractViolation(f"eps must be positive, got {self.eps}")
        if self.C_sample < 6.0 * (1.0 + self.eps / 3.0):
            raise ContractViolation(
                f"C_sample={self.C_sample} violates C >= 6(1 + eps/3) = {6 * (1 + self.eps / 3):.4g}"
            )
        if not self.opnorm_sq_guess > 0:
            raise ContractViolation("opnorm_sq_guess must be positive")
        if not self.d >= 1:
            raise ContractViolation("d must be >= 1")

    @property
    def scale(self):
        """p_i = min(1, scale * ||a_i||^2)."""
        return self.C_sample * log_factor(self.d) / (self.eps**2 * self.opnorm_sq_guess)

    def rescaled_norm(self):
        """Common norm of every emitted row whose probability was below 1."""
        return 1.0 / math.sqrt(self.scale)


def sample_probability(row_norm_sq, cfg):
    """Keep-probability min(1, C ||a||^2 log d / (eps^2 ||A||^2_guess))."""
    r = np.asarray(row_norm_sq, dtype=np.float64)
    if np.any(r < 0):
        raise ContractViolation("squared row norms must be non-negative")
    p = np.minimum(1.0, cfg.scale * r)
    return float(p) if p.ndim == 0 else p


def bernoulli_rescale(rows, probs, rng):
    """Keep row i with probability probs[i], scaled by 1/sqrt(probs[i])."""
    keep = rng.random(rows.shape[0]) < probs
    return rows[keep] / np.sqrt(probs[keep])[:, None], keep


def sample_rows(stream, cfg, rng, read_size=256):
    """Row-norm sampled substream; survivors keep their relative order."""

    def transform(rows):
        norms_sq = np.einsum("ij,ij->i", rows, rows)
        out, _ = bernoulli_rescale(rows, sample_probability(norms_sq, cfg), rng)
        return out

    return SubStream(stream, transform, read_size)


# -- guess ladder ------------------------------------------------------------


@dataclass(frozen=True)
class GuessLadder:
    floor_value: float
    cap_value: float
    guesses: tuple

    def __len__(self):
        return len(self.guesses)

    def __iter__(self):
        return iter(self.guesses)

    def index_for(self, x):
        """Index i with guesses[i] <= x < 2 * guesses[i]."""
        if not self.floor_value <= x <= self.cap_value:
            raise ContractViolation(f"{x} outside ladder range [{self.floor_value}, {self.cap_value}]")
        i = int(math.floor(math.log2(x / self.floor_value)))
        # guard the floating-point edge either side of a power of two
        i = min(max(i, 0), len(self.guesses) - 1)
        while self.guesses[i] > x:
            i -= 1
        while i + 1 < len(self.guesses) and self.guesses[i + 1] <= x:
            i += 1
        return i


def ladder_for(floor_value, cap_value):
    if not 0 < floor_value < cap_value:
        raise ContractViolation("ladder needs 0 < floor < cap")
    k = math.ceil(math.log2(cap_value / floor_value))
    return GuessLadder(floor_value, cap_value, tuple(floor_value * 2.0**i for i in range(k + 1)))


def default_ladder(n, d, power=4):
    """Ladder over [1/(n d)^power, (n d)^power]."""
    span = float(n * d) ** power
    return ladder_for(1.0 / span, span)


# -- Gaussian sketch ---------------------------------------------------------


def default_eps_jl(d):
    return max(0.05, 1.0 / log_factor(d) ** 2)


def sketch_rows(d, eps_jl, C_jl=1.0, n_candidates=1):
    """Sketch height C_jl * eps^-2 * (log d + log #candidates)."""
    slack = math.log(max(n_candidates, 1))
    return max(1, math.ceil(C_jl * (log_factor(d) + slack) / eps_jl**2))


class GaussianSketch:
    """Accumulates G*A one row at a time with a fresh column of G per row.

    Columns are N(0, I_m)/sqrt(m) so ``score(z)`` estimates ||A z|| directly.
    """

    def __init__(self, d, rng, m=None, eps_jl=None, C_jl=1.0, n_candidates=1):
        self.d = d
        self.eps_jl = default_eps_jl(d) if eps_jl is None else eps_jl
        self.m = sketch_rows(d, self.eps_jl, C_jl, n_candidates) if m is None else int(m)
        self.GA = np.zeros((self.m, d))
        self.rows_seen = 0
        self._rng = rng

    def update(self, rows):
        rows = np.atleast_2d(rows)
        if rows.shape[1] != self.d:
            raise ContractViolation(f"row length {rows.shape[1]} != sketch dimension {self.d}")
        g = self._rng.standard_normal((rows.shape[0], self.m))
        g /= math.sqrt(self.m)
        self.GA += g.T @ rows
        self.rows_seen += rows.shape[0]

    def score(self, z):
        z = np.asarray(z, dtype=np.float64)
        if abs(np.linalg.norm(z) - 1.0) > UNIT_TOL:
            raise ContractViolation("sketch_score needs a unit vector")
        return float(np.linalg.norm(self.GA @ z))

    def scores(self, Z):
        """Scores for the rows of Z (each must be unit)."""
        Z = np.atleast_2d(Z)
        if np.any(np.abs(np.linalg.norm(Z, axis=1) - 1.0) > UNIT_TOL):
            raise ContractViolation("sketch_score needs unit vectors")
        return np.linalg.norm(Z @ self.GA.T, axis=1)

    @property
    def dims(self):
        return (self.m, self.d)

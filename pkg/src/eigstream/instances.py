"""Synthetic instance families with oracle ground truth."""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractViolation
from .linalg import SpectralSummary, exact_top_eigens, unit

FAMILIES = ("planted_gap", "oja_hard", "lower_bound", "heavy_mixture")


@dataclass(frozen=True)
class InstanceSpec:
    family: str
    d: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractViolation(f"unknown instance family {self.family!r}")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"family", "d", "params", "seed"}
        if unknown:
            raise ContractViolation(f"unknown instance keys {sorted(unknown)}")
        return cls(data["family"], int(data["d"]), dict(data.get("params", {})), int(data.get("seed", 0)))


@dataclass
class Instance:
    A: np.ndarray
    truth: SpectralSummary
    spec: InstanceSpec
    planted: dict = field(default_factory=dict)

    def sidecar(self):
        return {
            "spec": asdict(self.spec),
            "n": int(self.A.shape[0]),
            "d": int(self.A.shape[1]),
            "truth": self.truth.to_dict(),
            "planted": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.planted.items()},
        }


def _orth_complement_rows(B, Q):
    """Rows of B with their components in span(columns of Q) removed."""
    return B - (B @ Q) @ Q.T


def gen_planted_gap(d, n, R, seed, row_model="gaussian", sigma1_sq=None):
    """Planted spike u over a bulk whose top eigenvalue is sigma1^2 / R.

    ``gaussian``: A = xi u^T + B with B orthogonal to u on the right and to xi
    on the left, so u is an exact eigenvector and the gap is exact.
    ``sphere``: every row has unit norm (eta = 1); the gap is only approximate.
    The achieved gap is always re-measured by the oracle.
    """
    if not R > 1:
        raise ContractViolation("planted gap needs R > 1")
    if n < d:
        raise ContractViolation("planted gap needs n >= d")
    rng = np.random.default_rng(seed)
    u = unit(rng.standard_normal(d))
    if row_model == "gaussian":
        s1 = float(n) if sigma1_sq is None else float(sigma1_sq)
        xi = rng.standard_normal(n)
        xi *= math.sqrt(s1) / np.linalg.norm(xi)
        B = rng.standard_normal((n, d))
        B = _orth_complement_rows(B, u[:, None])
        B -= np.outer(xi, xi @ B) / (xi @ xi)
        top = exact_top_eigens(B).sigma1_sq
        B *= math.sqrt(s1 / R / top)
        A = np.outer(xi, u) + B
    elif row_model == "sphere":
        w = R / (R + d - 1.0)
        signs = rng.choice([-1.0, 1.0], size=n)
        bulk = _orth_complement_rows(rng.standard_normal((n, d)), u[:, None])
        bulk /= np.linalg.norm(bulk, axis=1, keepdims=True)
        A = math.sqrt(w) * signs[:, None] * u[None, :] + math.sqrt(1.0 - w) * bulk
        if sigma1_sq is not None:
            A *= math.sqrt(sigma1_sq / exact_top_eigens(A).sigma1_sq)
    else:
        raise ContractViolation(f"unknown row_model {row_model!r}")
    spec = InstanceSpec("planted_gap", d, {"n": n, "R": R, "row_model": row_model}, seed)
    return Instance(A, exact_top_eigens(A), spec, {"u": u, "R_requested": R})


def gen_oja_hard(d, R, eps_gap, M):
    """R rows e1/sqrt(R), one row e2/sqrt(R - eps), 2M rows e3/sqrt(2MR)."""
    if R < 2 or int(R) != R:
        raise ContractViolation("R must be an integer >= 2")
    if not 0 < eps_gap < R - 1:
        raise ContractViolation("need 0 < eps_gap < R - 1")
    if d < 3:
        raise ContractViolation("hard instance needs d >= 3")
    if M < 1 or int(M) != M:
        raise ContractViolation("M must be a positive integer")
    R, M = int(R), int(M)
    alpha = 2 * M
    A = np.zeros((R + 1 + alpha, d))
    A[:R, 0] = 1.0 / math.sqrt(R)
    A[R, 1] = 1.0 / math.sqrt(R - eps_gap)
    A[R + 1:, 2] = 1.0 / math.sqrt(alpha * R)
    return A


def oja_hard_instance(d, R, eps_gap, M):
    A = gen_oja_hard(d, R, eps_gap, M)
    spec = InstanceSpec("oja_hard", d, {"R": R, "eps_gap": eps_gap, "M": M})
    e1 = np.zeros(d)
    e1[0] = 1.0
    truth = SpectralSummary(1.0, 1.0 / (R - eps_gap), e1)
    return Instance(A, truth, spec, {"alpha": 2 * M})


def gen_lower_bound(d, h, k, gamma, seed):
    """h Rademacher rows x plus k rows copying x_i on the first (1 - gamma) d
    coordinates with fresh signs elsewhere. Returns (A, i)."""
    if h < 1 or k < 1:
        raise ContractViolation("need h >= 1 and k >= 1")
    tail = gamma * d
    if not 0 <= gamma <= 1 or abs(tail - round(tail)) > 1e-9:
        raise ContractViolation("gamma * d must be an integer in [0, d]")
    tail = int(round(tail))
    rng = np.random.default_rng(seed)
    X = rng.choice([-1.0, 1.0], size=(h, d))
    i = int(rng.integers(h))
    Y = np.tile(X[i], (k, 1))
    if tail:
        Y[:, d - tail:] = rng.choice([-1.0, 1.0], size=(k, tail))
    return np.vstack([X, Y]), i


def lower_bound_instance(d, h, k, gamma, seed):
    A, i = gen_lower_bound(d, h, k, gamma, seed)
    spec = InstanceSpec("lower_bound", d, {"h": h, "k": k, "gamma": gamma}, seed)
    return Instance(A, exact_top_eigens(A), spec, {"index": i})


def gen_heavy_mixture(d, n_light, h, heavy_norm_sq, seed, bulk_top=1.0, rotate=True):
    """h orthogonal heavy rows over a light Gaussian bulk living in their
    orthogonal complement; the bulk's top eigenvalue is ``bulk_top``.

    ``heavy_norm_sq`` is a scalar or one value per heavy row.
    """
    if not 1 <= h < d:
        raise ContractViolation("need 1 <= h < d")
    norms_sq = np.broadcast_to(np.asarray(heavy_norm_sq, dtype=np.float64), (h,)).copy()
    if np.any(norms_sq <= 0):
        raise ContractViolation("heavy norms must be positive")
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((d, d)))[0] if rotate else np.eye(d)
    heavy = np.sqrt(norms_sq)[:, None] * Q[:, :h].T
    bulk = np.zeros((n_light, d))
    if n_light:
        bulk = _orth_complement_rows(rng.standard_normal((n_light, d)), Q[:, :h])
        bulk *= math.sqrt(bulk_top / exact_top_eigens(bulk).sigma1_sq)
    A = np.vstack([heavy, bulk])
    spec = InstanceSpec(
        "heavy_mixture", d,
        {"n_light": n_light, "h": h, "heavy_norm_sq": norms_sq.tolist(), "bulk_top": bulk_top,
         "rotate": rotate}, seed,
    )
    return Instance(A, exact_top_eigens(A), spec, {"heavy_directions": Q[:, :h].T})


def build_instance(spec):
    """Instance from a declarative spec (CLI entry point)."""
    p = dict(spec.params)
    if spec.family == "planted_gap":
        return gen_planted_gap(spec.d, int(p["n"]), float(p["R"]), spec.seed,
                               p.get("row_model", "gaussian"), p.get("sigma1_sq"))
    if spec.family == "oja_hard":
        inst = oja_hard_instance(spec.d, int(p["R"]), float(p["eps_gap"]), int(p["M"]))
        inst.spec = spec
        return inst
    if spec.family == "lower_bound":
        return lower_bound_instance(spec.d, int(p["h"]), int(p["k"]), float(p["gamma"]), spec.seed)
    return gen_heavy_mixture(spec.d, int(p["n_light"]), int(p["h"]), p["heavy_norm_sq"], spec.seed,
                             float(p.get("bulk_top", 1.0)), bool(p.get("rotate", True)))

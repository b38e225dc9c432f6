"""Run reports: the scientific record of one estimator run."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class RunReport:
    algorithm: str
    winner_branch: str
    estimate: list
    lanes: list = field(default_factory=list)
    rows_read: int = 0
    rows_stored_peak: int = 0
    sketch_dims: tuple = (0, 0)
    seeds: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    winner_lane: dict = field(default_factory=dict)
    correlation_vs_oracle: float = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return _plain(asdict(self))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

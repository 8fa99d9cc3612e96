from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from typing import Any


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyperparameters.

    ``leaf_cap`` bounds every leaf value before the learning rate is applied.
    ``early_stopping_rounds`` only matters when a validation set is passed to
    ``fit``; 0 disables it.
    """

    num_trees: int = 500
    learning_rate: float = 0.05
    max_leaves: int = 63
    max_bins: int = 255
    min_samples_leaf: int = 20
    min_sum_hessian_leaf: float = 1e-3
    leaf_cap: float = 1.5
    goss_enabled: bool = False
    goss_top_rate: float = 0.2
    goss_other_rate: float = 0.1
    early_stopping_rounds: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_trees < 0:
            raise ValueError("num_trees must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_leaves < 1:
            raise ValueError("max_leaves must be positive")
        if not 2 <= self.max_bins <= 256:
            raise ValueError("max_bins must lie in [2, 256]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")
        if self.min_sum_hessian_leaf < 0:
            raise ValueError("min_sum_hessian_leaf must be >= 0")
        if self.leaf_cap <= 0:
            raise ValueError("leaf_cap must be positive")
        if self.early_stopping_rounds < 0:
            raise ValueError("early_stopping_rounds must be >= 0")
        if self.goss_enabled:
            a, b = self.goss_top_rate, self.goss_other_rate
            if not (0.0 < a < 1.0 and 0.0 < b < 1.0 and a + b <= 1.0):
                raise ValueError("GOSS rates need 0 < a, 0 < b and a + b <= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

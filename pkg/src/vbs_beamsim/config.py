"""Experiment configuration loaded from JSON."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Tuple


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # radio
    f_c_hz: float = 40e9
    bandwidth_hz: float = 500e6
    p_t_dbm: float = 40.0
    n0_dbm_hz: float = -174.0
    gamma_db: float = 10.0
    # geometry
    bs_position: Tuple[float, float, float] = (140.0, 60.0, 4.0)
    ue_height: float = 1.5
    region: Tuple[float, float, float, float] = (40.0, 0.0, 160.0, 120.0)
    grid_dx: int = 40
    grid_dy: int = 40
    k_neighbors: int = 3
    # scene and scan
    n_boxes: int = 8
    scan_density: float = 10.0
    noise_sigma: float = 0.05
    drop_rate: float = 0.05
    # reconstruction
    object_voxel: float = 0.5
    object_min_cluster_size: int = 50
    object_min_samples: int = 10
    plane_dist_thresh: float = 0.15
    min_inliers: int = 100
    alpha: float = 1.0
    target_faces: int = 50
    vbs_min_cluster_size: int = 2
    vbs_min_samples: int = 1
    vbs_cluster_epsilon: float = 1.0
    # alignment
    antenna_configs: List[Tuple[int, int]] = field(default_factory=lambda: [(64, 8), (128, 8)])
    s_list: List[int] = field(default_factory=lambda: list(range(1, 11)))
    n_ue: int = 200
    max_order: int = 2
    r_min: float = 3.0
    codebook_min_corr: float = 0.95
    seed: int = 0

    def __post_init__(self):
        self.bs_position = tuple(float(x) for x in self.bs_position)
        self.region = tuple(float(x) for x in self.region)
        self.antenna_configs = [tuple(int(x) for x in c) for c in self.antenna_configs]
        self.s_list = [int(s) for s in self.s_list]
        self.validate()

    def validate(self) -> None:
        positive = ("f_c_hz", "bandwidth_hz", "ue_height", "grid_dx", "grid_dy", "k_neighbors",
                    "scan_density", "object_voxel", "object_min_cluster_size", "object_min_samples",
                    "plane_dist_thresh", "min_inliers", "alpha", "target_faces", "n_ue", "r_min")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.noise_sigma < 0 or not 0 <= self.drop_rate < 1:
            raise ConfigError("noise_sigma must be >= 0 and drop_rate in [0, 1)")
        if len(self.bs_position) != 3 or len(self.region) != 4:
            raise ConfigError("bs_position needs 3 values and region 4")
        if not (self.region[2] > self.region[0] and self.region[3] > self.region[1]):
            raise ConfigError("region must have positive extent")
        if not self.antenna_configs or any(len(c) != 2 or min(c) < 1 for c in self.antenna_configs):
            raise ConfigError("antenna_configs must be a non-empty list of [n_bs, n_ue] pairs")
        if not self.s_list or min(self.s_list) < 1:
            raise ConfigError("s_list must hold positive integers")
        if self.max_order not in (0, 1, 2):
            raise ConfigError("max_order must be 0, 1 or 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bs_position"] = list(self.bs_position)
        d["region"] = list(self.region)
        d["antenna_configs"] = [list(c) for c in self.antenna_configs]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"unknown config key: {key!r}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(d)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")

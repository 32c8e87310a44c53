"""End-to-end VBS store construction and the alignment experiment loop."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .align import LinkBudget, loc_estimate, rckm_estimate, sweep, vbs_estimate, with_fallback
from .chan import ArrayConfig, Codebook, build_polar_codebook
from .cloud import estimate_ground_z, voxel_downsample
from .config import ExperimentConfig
from .geom import Triangle, TriangleArrays
from .hdbscan import hdbscan
from .mesh import TriMesh, reconstruct_object_mesh
from .oracle import CkmTable, FaceArrays, ground_truth_channel, trace_paths
from .qem import simplify_qem
from .scene import Scene
from .vbs import (GridSpec, VbsRecord, VbsStore, cluster_vbs, compute_coverage, compute_raw_vbs,
                  ground_triangles, ground_vbs)

log = logging.getLogger(__name__)

GROUND_BAND = 0.3
CSV_HEADER = ("ue_x,ue_y,method,S,n_bs,n_ue,chosen_b_bs,chosen_b_ue,gain,se_bps_hz,"
              "pairs_trained,covered_flag")


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("VBS_BEAMSIM_THREADS", "1")))
    except ValueError:
        return 1


def grid_spec(cfg: ExperimentConfig) -> GridSpec:
    return GridSpec(cfg.grid_dx, cfg.grid_dy, tuple(cfg.region), cfg.ue_height)


@dataclass
class BuildReport:
    n_objects: int
    faces_before: int
    faces_after: int
    n_raw_vbs: int
    n_clustered_vbs: int


def segment_objects(points: np.ndarray, cfg: ExperimentConfig,
                    ground_z: Optional[float] = None) -> Tuple[List[np.ndarray], float]:
    """Split the above-ground points into objects; returns ``(objects, ground_z)``."""
    gz = estimate_ground_z(points) if ground_z is None else ground_z
    above = points[points[:, 2] > gz + GROUND_BAND]
    if not len(above):
        return [], gz
    cent, inv = voxel_downsample(above, cfg.object_voxel)
    labels = hdbscan(cent, cfg.object_min_cluster_size, cfg.object_min_samples)
    point_labels = labels[inv]
    objects = [above[point_labels == k] for k in range(int(labels.max()) + 1)]
    return objects, gz


def object_meshes(objects: Sequence[np.ndarray], cfg: ExperimentConfig) -> Tuple[List[TriMesh], int]:
    meshes, before = [], 0
    for k, pts in enumerate(objects):
        m = reconstruct_object_mesh(pts, cfg.plane_dist_thresh, cfg.min_inliers, cfg.alpha,
                                    seed=cfg.seed + k).drop_degenerate()
        before += len(m)
        if len(m):
            meshes.append(simplify_qem(m, cfg.target_faces))
    return meshes, before


def build_vbs_store(points: np.ndarray, cfg: ExperimentConfig,
                    ground_z: Optional[float] = None) -> Tuple[VbsStore, TriangleArrays, BuildReport]:
    """Point cloud to VBS store: objects, meshes, raw images, clusters, coverage."""
    points = np.asarray(points, float)
    o_bs = np.asarray(cfg.bs_position, float)
    objects, gz = segment_objects(points, cfg, ground_z)
    meshes, before = object_meshes(objects, cfg)
    tris: List[Triangle] = []
    for m in meshes:
        tris.extend(m.triangles())
    n_obj_tris = len(tris)
    tris.extend(ground_triangles(cfg.region, gz))
    ground_ids = list(range(n_obj_tris, len(tris)))
    arrays = TriangleArrays.from_triangles(tris)
    raw = compute_raw_vbs(arrays, o_bs, ground_ids)
    clustered = cluster_vbs(raw, cfg.vbs_min_cluster_size, cfg.vbs_min_samples,
                            cfg.vbs_cluster_epsilon)
    records = [VbsRecord(0, 1, o_bs), VbsRecord(1, 1, ground_vbs(o_bs, gz), ground_ids)] + clustered
    grid = compute_coverage(records, arrays, grid_spec(cfg), o_bs)
    report = BuildReport(len(objects), before, n_obj_tris, len(raw), len(clustered))
    log.info("objects=%d faces_before=%d faces_after=%d raw_vbs=%d clustered_vbs=%d",
             report.n_objects, report.faces_before, report.faces_after, report.n_raw_vbs,
             report.n_clustered_vbs)
    return VbsStore(o_bs, records, grid), arrays, report


def drop_ues(scene: Scene, cfg: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform UE positions over the region, redrawing any that land inside a box."""
    xmin, ymin, xmax, ymax = cfg.region
    out = np.zeros((0, 3))
    while len(out) < cfg.n_ue:
        n = cfg.n_ue - len(out)
        cand = np.column_stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n),
                                np.full(n, cfg.ue_height)])
        out = np.vstack([out, cand[~scene.inside_any_box(cand)]])
    return out[:cfg.n_ue]


class Codebooks:
    """Per-size codebook cache."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._cache: Dict[int, Codebook] = {}

    def get(self, n: int) -> Codebook:
        if n not in self._cache:
            self._cache[n] = build_polar_codebook(ArrayConfig(n), self.cfg.f_c_hz, self.cfg.r_min,
                                                  min_corr=self.cfg.codebook_min_corr)
        return self._cache[n]


def evaluate_ue(ue: np.ndarray, scene: Scene, store: VbsStore, ckm: CkmTable, cfg: ExperimentConfig,
                books: Codebooks, faces: Optional[FaceArrays] = None) -> List[str]:
    """CSV rows for one UE across every antenna configuration."""
    o_bs = store.bs_location
    link = LinkBudget.from_db(cfg.p_t_dbm, cfg.n0_dbm_hz, cfg.bandwidth_hz)
    paths = trace_paths(scene, o_bs, ue, cfg.max_order, cfg.f_c_hz, faces=faces)
    rows = []
    for n_bs, n_ue in cfg.antenna_configs:
        bs_cfg, ue_cfg = ArrayConfig(n_bs), ArrayConfig(n_ue)
        U_bs, U_ue = books.get(n_bs), books.get(n_ue)
        H = ground_truth_channel(paths, bs_cfg, ue_cfg, cfg.f_c_hz)
        f = cfg.f_c_hz
        est = {
            "vbs-ba": with_fallback(vbs_estimate(store, ue, bs_cfg, ue_cfg, f, cfg.gamma_db,
                                                  cfg.k_neighbors), o_bs, ue, bs_cfg, ue_cfg, f),
            "loc-ba": (loc_estimate(o_bs, ue, bs_cfg, ue_cfg, f), True),
            "rckm-ba": with_fallback(rckm_estimate(ckm, ue, bs_cfg, ue_cfg, f),
                                      o_bs, ue, bs_cfg, ue_cfg, f),
        }
        s_list = [s for s in cfg.s_list if s <= U_bs.m * U_ue.m]
        for r in sweep(H, est, U_bs, U_ue, s_list, link):
            rows.append(f"{ue[0]:.4f},{ue[1]:.4f},{r.method},{r.s},{n_bs},{n_ue},{r.pair.b_bs},"
                        f"{r.pair.b_ue},{r.gain:.9e},{r.se:.9f},{r.pairs_trained},{int(r.covered)}")
    return rows


def run_alignment(scene: Scene, store: VbsStore, ckm: CkmTable, cfg: ExperimentConfig,
                  ues: Optional[np.ndarray] = None) -> List[str]:
    """All result rows (header first) in UE order; identical for any thread count."""
    if ues is None:
        ues = drop_ues(scene, cfg, np.random.default_rng(cfg.seed))
    books = Codebooks(cfg)
    for n_bs, n_ue in cfg.antenna_configs:
        books.get(n_bs)
        books.get(n_ue)
    faces = FaceArrays(scene)
    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        chunks = list(pool.map(lambda u: evaluate_ue(u, scene, store, ckm, cfg, books, faces), ues))
    return [CSV_HEADER] + [row for chunk in chunks for row in chunk]

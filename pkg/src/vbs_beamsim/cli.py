"""``vbs-beamsim`` command line entry point."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cloud import preprocess, read_cloud, simulate_scan, write_cloud
from .config import ConfigError, ExperimentConfig, load_config
from .oracle import build_ckm, save_ckm
from .pipeline import build_vbs_store, grid_spec, run_alignment
from .scene import generate_scene, load_scene, save_scene
from .vbs import load_store, save_store

log = logging.getLogger("vbs_beamsim")

SCENE_FILE = "scene.json"
CLOUD_FILE = "cloud.xyz"
STORE_FILE = "vbs_store.json"
CKM_FILE = "ckm.json"
RESULTS_FILE = "results.csv"
METHOD_ORDER = ("vbs-ba", "loc-ba", "rckm-ba", "exhaustive")


def cmd_generate_scene(cfg: ExperimentConfig, out: Path) -> Path:
    scene = generate_scene(cfg.seed, cfg.region, cfg.n_boxes, cfg.bs_position[:2])
    path = out / SCENE_FILE
    save_scene(scene, path)
    log.info("scene with %d boxes -> %s", len(scene.boxes), path)
    return path


def cmd_scan(cfg: ExperimentConfig, out: Path) -> Path:
    scene = load_scene(out / SCENE_FILE)
    raw = simulate_scan(scene, cfg.scan_density, cfg.noise_sigma, cfg.drop_rate, cfg.seed + 1)
    cloud = preprocess(raw)
    path = out / CLOUD_FILE
    write_cloud(cloud, path)
    log.info("scan: %d points, %d after outlier removal -> %s", len(raw), len(cloud), path)
    return path


def cmd_build_vbs(cfg: ExperimentConfig, out: Path) -> Path:
    cloud = read_cloud(out / CLOUD_FILE)
    store, _, _ = build_vbs_store(cloud.points, cfg)
    path = out / STORE_FILE
    save_store(store, path)
    log.info("VBS store with %d records -> %s", len(store.records), path)
    return path


def cmd_align(cfg: ExperimentConfig, out: Path) -> Path:
    scene = load_scene(out / SCENE_FILE)
    store = load_store(out / STORE_FILE)
    ckm = build_ckm(scene, store.bs_location, grid_spec(cfg), cfg.f_c_hz, cfg.max_order)
    save_ckm(ckm, out / CKM_FILE)
    rows = run_alignment(scene, store, ckm, cfg)
    path = out / RESULTS_FILE
    path.write_text("\n".join(rows) + "\n")
    log.info("%d result rows -> %s", len(rows) - 1, path)
    return path


def summarize(results_csv: Path) -> Dict[Tuple[str, int, int, int], Tuple[float, int]]:
    """Mean SE keyed by (method, S, n_bs, n_ue)."""
    acc: Dict[Tuple[str, int, int, int], List[float]] = defaultdict(list)
    with open(results_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["method"], int(row["S"]), int(row["n_bs"]), int(row["n_ue"]))
            acc[key].append(float(row["se_bps_hz"]))
    return {k: (float(np.mean(v)), len(v)) for k, v in acc.items()}


def _method_rank(m: str) -> int:
    return METHOD_ORDER.index(m) if m in METHOD_ORDER else len(METHOD_ORDER)


def cmd_report(cfg: ExperimentConfig, out: Path, table_s: int = 5) -> List[Path]:
    summary = summarize(out / RESULTS_FILE)
    keys = sorted(summary, key=lambda k: (k[2], k[3], _method_rank(k[0]), k[0], k[1]))
    written = []

    path = out / "summary_se.csv"
    with open(path, "w") as fh:
        fh.write("method,S,n_bs,n_ue,mean_se_bps_hz,n_ue_drops\n")
        for k in keys:
            fh.write(f"{k[0]},{k[1]},{k[2]},{k[3]},{summary[k][0]:.6f},{summary[k][1]}\n")
    written.append(path)

    configs = sorted({(k[2], k[3]) for k in keys})
    methods = sorted({k[0] for k in keys}, key=lambda m: (_method_rank(m), m))
    path = out / f"table_antenna_s{table_s}.csv"
    with open(path, "w") as fh:
        fh.write("n_bs,n_ue," + ",".join(methods) + "\n")
        for nb, nu in configs:
            vals = []
            for m in methods:
                hits = [summary[k][0] for k in keys if k[0] == m and k[2] == nb and k[3] == nu
                        and (m == "exhaustive" or k[1] == table_s)]
                vals.append(f"{hits[0]:.6f}" if hits else "")
            fh.write(f"{nb},{nu}," + ",".join(vals) + "\n")
    written.append(path)

    for nb, nu in configs:
        exh = [summary[k][0] for k in keys if k[0] == "exhaustive" and k[2] == nb and k[3] == nu]
        s_values = sorted({k[1] for k in keys if k[0] != "exhaustive" and k[2] == nb and k[3] == nu})
        for m in methods:
            path = out / f"se_vs_s_{m}_{nb}x{nu}.dat"
            with open(path, "w") as fh:
                fh.write("# S mean_se_bps_hz\n")
                for s in s_values:
                    if m == "exhaustive":
                        v = exh[0] if exh else float("nan")
                    else:
                        v = summary.get((m, s, nb, nu), (float("nan"), 0))[0]
                    fh.write(f"{s} {v:.6f}\n")
            written.append(path)
    for p in written:
        log.info("report -> %s", p)
    return written


STEPS = {
    "generate-scene": cmd_generate_scene,
    "scan": cmd_scan,
    "build-vbs": cmd_build_vbs,
    "align": cmd_align,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vbs-beamsim",
                                description="VBS-assisted beam alignment simulator")
    p.add_argument("command", choices=list(STEPS) + ["all"])
    p.add_argument("--config", type=Path, help="JSON experiment config (defaults if omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
    except (ConfigError, OSError) as exc:
        print(f"vbs-beamsim: config error: {exc}", file=sys.stderr)
        return 2
    args.out.mkdir(parents=True, exist_ok=True)
    steps = list(STEPS) if args.command == "all" else [args.command]
    try:
        for name in steps:
            STEPS[name](cfg, args.out)
    except (OSError, ValueError) as exc:
        print(f"vbs-beamsim: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

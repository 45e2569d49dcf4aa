#!/usr/bin/env python3
"""2D high-order study on a fixed mesh: p = 2..5 with trace order p - 1."""
import argparse
import logging
from pathlib import Path

from mortaraux.experiment import RunConfig, emit_report, run_order_study

ROOT = Path(__file__).resolve().parents[1]

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--config", type=Path, default=ROOT / "configs" / "order_2d.json")
ap.add_argument("--out", type=Path, default=ROOT / "out" / "order")
ap.add_argument("--orders", type=int, nargs="+", default=None)
args = ap.parse_args()
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

cfg = RunConfig.load(args.config)
if args.orders:
    cfg.order = args.orders
    cfg.validate()
rows = run_order_study(cfg, args.out)
_, txt = emit_report(rows, args.out, cfg.name, "order", wall_time=True)
print(txt.read_text())

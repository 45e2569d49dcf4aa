#!/usr/bin/env python3
"""3D low-order refinement study: n_it and OC_m per level for B_mult with exact S.

    python scripts/refinement_study.py [--config configs/refinement_3d.json] [--out out/refinement]
"""
import argparse
import logging
from pathlib import Path

from mortaraux.experiment import RunConfig, emit_report, run_refinement_study

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "refinement_3d.json")
    ap.add_argument("--out", type=Path, default=ROOT / "out" / "refinement")
    ap.add_argument("--refinements", type=int, default=None, help="override the number of refinements")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = RunConfig.load(args.config)
    if args.refinements is not None:
        cfg.refinements = args.refinements
        cfg.validate()
    cfg.report_wall_time = True
    rows = run_refinement_study(cfg, args.out)
    _, txt = emit_report(rows, args.out, cfg.name, "refinement", wall_time=True)
    print(txt.read_text())
    for r in rows:
        print(f"level {r.level}: lambda in [{r.lmin:.4f}, {r.lmax:.4f}], {r.seconds:.1f}s")


if __name__ == "__main__":
    main()

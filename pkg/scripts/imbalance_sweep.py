"""Cross-validated decoder F1 across training-set alpha ratios.

    python3 scripts/imbalance_sweep.py --config configs/imbalance.json --out sweep.csv
"""

from _common import parse, table

from spikedx.evaluation import POOLED, run_imbalance_sweep

cfg, out = parse(__doc__.splitlines()[0])
res = run_imbalance_sweep(cfg)
pooled = [r for r in res.rows if r["fold"] == POOLED]
print("pooled F1 (rows: mean training alpha)")
table(pooled, "alpha")
collapsed = sum(o.mode_collapse for o in res.summary["outcomes"])
print(f"mode-collapsed fold cells: {collapsed}/{len(res.summary['outcomes'])}")
if out:
    res.write_csv(out)

"""Full pipeline per feature group, plus the logistic top-k feature sweep.

    python3 scripts/feature_ablation.py --config configs/ablation.json
"""

from _common import parse, table

from spikedx.evaluation import POOLED, run_feature_ablation

cfg, out = parse(__doc__.splitlines()[0])
res = run_feature_ablation(cfg)
pooled = [r for r in res.rows if r["fold"] == POOLED]
print("pooled F1 per feature group")
table([r for r in pooled if r["experiment"].startswith("ablate:")], "experiment")
print("\nlogistic F1 on the top-k mRMR features")
for r in pooled:
    if r["experiment"].startswith("ksweep:"):
        print(f"  k={r['experiment'].split('=')[1]:>3s}  F1 {r['f1']:.3f}")
if out:
    res.write_csv(out)

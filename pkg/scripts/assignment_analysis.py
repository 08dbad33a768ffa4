"""Correlation between training-set alpha and the alpha of the neuron assignment.

    python3 scripts/assignment_analysis.py --config configs/assignment.json
"""

from _common import parse

from spikedx.evaluation import run_assignment_analysis

cfg, out = parse(__doc__.splitlines()[0])
res = run_assignment_analysis(cfg)
print(f"{'target':>8s} {'fold':>4s} {'train alpha':>12s} {'assign alpha':>13s} {'collapse':>8s}")
for o in res.summary["outcomes"]:
    print(f"{o.alpha_key:>8s} {o.fold:4d} {o.train_alpha:12.4f} {o.assignment_alpha:13.4f} {int(o.mode_collapse):8d}")
print(f"pearson = {res.summary['pearson']:.4f}; collapsed cells = {res.summary['collapsed_cells']}")
if out:
    res.write_csv(out)

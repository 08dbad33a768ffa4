"""Accuracy of an untrained network when Z is built from the scored subset itself.

    python3 scripts/bias_experiment.py --config configs/bias.json
"""

from _common import parse
from scipy.stats import spearmanr

from spikedx.evaluation import run_bias_experiment

cfg, out = parse(__doc__.splitlines()[0])
res = run_bias_experiment(cfg)
means = res.mean_accuracy_by_size()
for size, acc in means.items():
    print(f"subset size {size:4d}: mean accuracy {acc:.4f}")
if len(means) > 1:
    print(f"spearman(size, accuracy) = {spearmanr(list(means), list(means.values()))[0]:.3f}")
if out:
    res.write_csv(out)

# Where does the pointwise tensor condition hold, and is the monotone
# quantity nondecreasing there? Sweep b (b' = b - d) and the metric
# amplitude on the bump scenario.
import os

from extflow import config, runner

here = os.path.dirname(os.path.abspath(__file__))
cfg = config.load(os.path.join(here, "configs", "sweep_base.json"))
cfg.output.dir = os.path.join(here, cfg.output.dir)

# %%
rows = runner.sweep(cfg, "b", [0.2, 0.3, 0.5, 1.0, 4.0])
for r in rows:
    print(
        f"b={r['value']:<4} defined={r['condition_defined']!s:5} "
        f"ok fraction={r.get('condition_ok_fraction', float('nan')):.2f} "
        f"min margin={r.get('min_margin', float('nan')): .3e} q2 nondecreasing={r.get('q2_nondecreasing')}"
    )

# Just above b' = 1/4 the denominator 4b' - 1 is small, the left side is
# dominated by |Hess phi|/(4b' - 1) and the condition holds at every node even
# for nonconstant phi; for larger b' it fails where the curvature vanishes.

# %%
# alpha = 0 removes the scalar field from the metric equation; with a
# nonconstant phi the condition still needs |S| to dominate |Hess phi|.
cfg.output.dir = os.path.join(here, "out", "sweep_alpha")
for r in runner.sweep(cfg, "alpha", [0.0, 0.5, 1.0]):
    print(f"alpha={r['value']:<4} ok fraction={r['condition_ok_fraction']:.2f} min margin={r['min_margin']: .3e}")

"""Choosing the fairness weight by bisection, grid sweep and descent.

Run: python3 demos/04_tuning.py
"""
# %%
from repgraph.tuner import meta_weights, MetaControllerParams, preset_lambda, tune_bisect, tune_gd, tune_grid


def disparity(lam):
    return 0.3 - 0.25 * lam


trace = tune_bisect(disparity, delta_max=0.1)
for lam, d in trace.evaluations:
    print(f"  lambda={lam:<8} disparity={d:.4f}")
print("bisection picks", trace.chosen, "feasible" if trace.feasible else "infeasible")

# %% A 0.1-step grid, then bisection inside the bracketing interval.
print("grid:", tune_grid(disparity, delta_max=0.1).chosen)
print("grid + refinement:", tune_grid(disparity, delta_max=0.1, refine=True).chosen)

# %% Step sizes eta0 * t**-alpha with a central-difference gradient.
print("descent on (lambda - 0.3)^2:", round(tune_gd(lambda lam: (lam - 0.3) ** 2).chosen, 4))

# %% Task presets and the meta-controller's weights (uniform at zero parameters).
print("presets:", preset_lambda("viral"), preset_lambda("tumor"))
print("meta weights:", meta_weights([0.2, 0.1, 0.4], MetaControllerParams.zeros(3)))

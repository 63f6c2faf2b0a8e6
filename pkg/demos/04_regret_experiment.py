"""A shortened reference experiment: 5 seeds, all four algorithms.

Writes ``regret_demo.csv`` and ``regret_demo.svg`` in the working directory.
The full 20-seed run is ``python -m tensor_bandits run <reference.cfg>``.
"""

import dataclasses

import numpy as np

from tensor_bandits.harness import parse_config, plot_svg, reference_config_path, run_experiment, write_csv

cfg = dataclasses.replace(parse_config(reference_config_path()), seeds=(1, 2, 3, 4, 5), T=4000)
traces = run_experiment(cfg)
write_csv(traces, "regret_demo.csv")
plot_svg("regret_demo.csv", "regret_demo.svg")
for algo in cfg.algorithms:
    finals = [t.final for t in traces if t.algo == algo]
    print(f"{algo:12s} median cumulative regret at T={cfg.T}: {np.median(finals):9.2f}")
info = next(t.info for t in traces if t.algo == "tofu")
print("tofu Phase A length", info["T1"], "eta", round(info["eta"], 4), "C_perp", round(info["C_perp"], 4))

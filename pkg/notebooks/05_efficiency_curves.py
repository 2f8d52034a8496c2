# %% [markdown]
# # Iterations to convergence
# Train the full model and BPR on the same data and merge their logs with the
# `curves` command. The CSV is ready for any plotting tool.

# %%
import csv
import tempfile
from pathlib import Path

from dregn.cli import main
from dregn.experiments import ablation_run, benchmark_dataset

ds, _ = benchmark_dataset(0)
out = Path(tempfile.mkdtemp())
for name in ["full", "bpr"]:
    _, log = ablation_run(name, 0, ds)
    log.write_jsonl(out / f"{name}.jsonl")

main(["curves", f"full={out / 'full.jsonl'}", f"bpr={out / 'bpr.jsonl'}", "--out", str(out / "curves.csv")])

# %%
with open(out / "curves_summary.csv") as fh:
    for row in csv.DictReader(fh):
        print(row)

# A small benchmark grid written to CSV and drawn as SVG
#
# The same thing from the shell:
#   smcmc bench --preset table1-d64-sy1 --set model.d=16 --trials 3 --out bench.csv
#   smcmc report --csv bench.csv --svg bench.svg

# %%
import csv
from pathlib import Path

from smcmc.harness import cmd_bench, emit_report, preset

out = Path("demo_bench")
out.mkdir(exist_ok=True)

rows = []
for d in (4, 9, 16):
    cfg = preset("table1-d64-sy1").with_overrides({"model.d": str(d), "run.trials": "3", "filter.N": "200",
                                                   "filter.N_b": "50"})
    path = out / f"bench_d{d}.csv"
    cmd_bench(cfg, path)
    rows += [r for r in csv.DictReader(path.open()) if r["trial"] == "mean"]

# %%
# Stack the aggregate rows of each dimension into one report CSV.
merged = out / "bench.csv"
with merged.open("w", newline="") as fh:
    writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
emit_report(merged, out / "bench.svg", steps_csv=out / "bench_d16.steps.csv")
for r in rows:
    print(r["d"], r["method"], r["mse"], r["rho3"])
print("wrote", out / "bench.svg")

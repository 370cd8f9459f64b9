#!/usr/bin/env python
# Fidelity-versus-size comparison of the active extractor against CART on
# the fixed training set and the rejection-sampling (born-again) baseline.
# A small-scale version of the benchmark; the full 20-seed run lives in the
# acceptance suite and the `treextract experiment` subcommand.
from treextract.evaluate import cartpole_task, run_fidelity_curve

task = cartpole_task()
sizes = (3, 7, 11, 15)
result = run_fidelity_curve(task, sizes, ("ours", "cart", "born_again"),
                            n_seeds=5)

print(f"{'size':>4}  {'ours':>6}  {'cart':>6}  {'born-again':>10}")
for size in sizes:
    print(f"{size:>4}  "
          f"{result.median('ours', size):>6.3f}  "
          f"{result.median('cart', size):>6.3f}  "
          f"{result.median('born_again', size):>10.3f}")

print()
print("CSV rows (the experiment subcommand writes these to a file):")
print("\n".join(result.to_csv_text().splitlines()[:6]))
print("...")

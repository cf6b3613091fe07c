"""Print the threshold rate table and the utilization frontier for a
config.

Usage: python scripts/rate_table.py [--config configs/example1.yaml]
"""

import argparse
from pathlib import Path

from minwork import frontier, load_spec, max_service_rate, threshold_rates


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--config",
        default=Path(__file__).resolve().parent.parent / "configs" / "example1.yaml",
    )
    args = ap.parse_args()
    spec = load_spec(args.config)

    print(f"n_s = {spec.n_s}")
    print("tau  service   utilization")
    for tau in range(1, spec.n_s + 2):
        nu, u = threshold_rates(spec, tau)
        print(f"{tau:>3}  {nu:8.4f}  {u:11.4f}")
    nu_star, tau_star = max_service_rate(spec)
    print(f"\nmaximal service rate {nu_star:.4f} at tau = {tau_star}")

    front = frontier(spec)
    print("\nfrontier breakpoints (service rate, utilization):")
    for nu, u in front.breakpoints:
        print(f"  {nu:.6f}  {u:.6f}")
    print("\nsampled frontier (11 points):")
    for nu, u in front.sample(11):
        print(f"  {nu:.4f}  {u:.4f}")


if __name__ == "__main__":
    main()

"""Per-kernel energy/latency breakdown for a dense transformer layer stack.

Loads the shipped Llama3-8B-shaped dimensions and the fused dense layer
spec, prices a prefill and a decode phase on the synthetic A100-like
profile, and prints where time and energy go: per-op rows, category
totals, and the request-level metrics (time/energy to first token,
time/energy per output token).

Run:  python3 demos/demo_breakdown.py
"""

from llm_energy import (
    CommBackend,
    Estimator,
    PhaseContext,
    RooflineBackend,
    epot,
    etft,
    load_bindings,
    load_comm_calibration,
    load_hardware_profile,
    load_model_spec,
)
from llm_energy.fixtures import fixture_path


def print_report(report):
    print(f"\n=== {report.phase} | batch={report.batch} isl={report.isl} "
          f"osl={report.osl} | {report.gpu_count} GPUs ===")
    print(f"{'op':<24} {'category':<14} {'latency':>12} {'energy':>12}")
    for row in sorted(report.rows, key=lambda r: -r.energy):
        print(f"{row.label:<24} {row.category:<14} "
              f"{row.latency * 1e3:>10.3f}ms {row.energy:>11.2f}J")
    print(f"{'TOTAL':<24} {'':<14} "
          f"{report.total_latency * 1e3:>10.3f}ms {report.total_energy:>11.2f}J")
    for category, energy in sorted(report.category_energy().items()):
        share = energy / report.total_energy if report.total_energy else 0.0
        print(f"  {category:<14} {energy:>10.2f} J  ({share:5.1%})")


def main():
    spec = load_model_spec(fixture_path("dense_fused.json"))
    dims = load_bindings(fixture_path("llama3_8b.json"))
    hw = load_hardware_profile(fixture_path("a100_sxm_80g.json"))
    compute = RooflineBackend(hw)
    comm = CommBackend(load_comm_calibration(fixture_path("comm_synthetic.csv")))

    est = Estimator(spec, dims, hw, compute, comm)
    degrees = {"tp": 2}

    prefill = est.estimate(PhaseContext("prefill", batch=4, isl=2048), degrees)
    print_report(prefill)
    print(f"\nETFT (energy to first token): {etft(prefill):.2f} J/request")

    decode = est.estimate(PhaseContext("decode", batch=4, isl=2048, osl=256),
                          degrees)
    print_report(decode)
    print(f"\nEPOT (energy per output token): {epot(decode):.3f} J/token")


if __name__ == "__main__":
    main()

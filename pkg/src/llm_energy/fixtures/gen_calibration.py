"""Regenerate the synthetic calibration fixtures.

Communication: alpha-beta model (see ``comm.synthetic_comm_table``) with
alpha = 10 us * log2(world) * (1 + 1/sm), effective bandwidth 200 GB/s
scaled by min(1, sm/16), per-GPU power 300 W. Worlds 2/4/8, SM
allocations 1/4/16/108, sizes 1 KiB to 1 GiB.

GEMM: roofline-evaluated points on the A100-like profile across a small
shape grid, to exercise the table-lookup compute backend.

Run: python -m llm_energy.fixtures.gen_calibration
"""

from pathlib import Path

from ..comm import synthetic_comm_table, write_comm_table
from ..compute import estimate_gemm, load_hardware_profile
from ..interpreter import GemmDescriptor

OUT = Path(__file__).parent

COMM_PARAMS = dict(worlds=(2, 4, 8), sm_counts=(1, 4, 16, 108),
                   min_bytes=1024.0, max_bytes=float(2 ** 30),
                   points_per_curve=21, base_bw=200e9, alpha=10e-6,
                   power_per_gpu=300.0)

GEMM_SHAPES = [
    # (G, M, contraction, N)
    (1, 16, 8192, 8192),
    (1, 256, 8192, 8192),
    (1, 4096, 8192, 8192),
    (1, 16384, 8192, 8192),
    (1, 4096, 8192, 28672),
    (1, 1, 8192, 8192),
    (8, 256, 2048, 1536),
    (32, 256, 2048, 1536),
]


def main() -> None:
    table = synthetic_comm_table(**COMM_PARAMS)
    write_comm_table(table, OUT / "comm_synthetic.csv")

    hw = load_hardware_profile(OUT / "a100_sxm_80g.json")
    with open(OUT / "gemm_synthetic.csv", "w") as fh:
        fh.write("# synthetic: roofline-evaluated on the a100_sxm_80g profile\n")
        fh.write("G,M,contraction,N,dtype_bytes,latency_s,power_w\n")
        for g_count, m, k, n in GEMM_SHAPES:
            g = GemmDescriptor(g_count, m, k, n, dtype_bytes=2)
            cost = estimate_gemm(g, hw)
            fh.write(f"{g_count},{m},{k},{n},2,{cost.latency!r},{cost.power!r}\n")


if __name__ == "__main__":
    main()

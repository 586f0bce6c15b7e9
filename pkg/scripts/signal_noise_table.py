"""Smallest true singular value against largest spurious one, per model and sample size.

Recovery at threshold tl needs signal >= tl > noise, so this table shows which
models are recoverable at all and which thresholds would work.
"""
from dataclasses import dataclass

from _common import parse_overrides

from lingcrel.harness import BenchmarkConfig, run_benchmark


@dataclass
class SignalNoiseConfig:
    """Signal and noise scales of the rank decisions."""
    d: int = 5
    N_list: tuple = (10000, 20000, 100000)
    num_graphs: int = 10
    master_seed: int = 0
    normalize_rows: bool = True
    workers: int = 1


def main():
    cfg = parse_overrides(SignalNoiseConfig())
    bench = BenchmarkConfig(d=cfg.d, N_list=tuple(cfg.N_list), num_graphs=cfg.num_graphs,
                            master_seed=cfg.master_seed, normalize_rows=cfg.normalize_rows,
                            workers=cfg.workers)
    results = run_benchmark(bench)
    header = f"{'trial':>5} {'signal':>7} " + " ".join(f"{'noise@' + str(N):>12}" for N in bench.N_list)
    print(header)
    for t in range(cfg.num_graphs):
        rows = [r for r in results if r.trial == t]
        signal = next((r.report.signal_min for r in rows if r.ok), float("nan"))
        noise = " ".join(f"{r.report.noise_max:12.3f}" if r.ok else f"{r.status:>12}" for r in rows)
        print(f"{t:5d} {signal:7.3f} {noise}")


if __name__ == "__main__":
    main()

"""Recovery count over a grid of thresholds and sample sizes."""
from dataclasses import dataclass

from _common import parse_overrides

from lingcrel.harness import BenchmarkConfig, emit_report, run_benchmark


@dataclass
class GridConfig:
    """Threshold sweep."""
    d: int = 5
    N_list: tuple = (5000, 20000, 100000)
    tl: tuple = (0.05, 0.1, 0.15, 0.2, 0.3)
    num_graphs: int = 10
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "results/tl_grid"


def main():
    cfg = parse_overrides(GridConfig())
    bench = BenchmarkConfig(d=cfg.d, N_list=tuple(cfg.N_list), tl=tuple(cfg.tl), num_graphs=cfg.num_graphs,
                            master_seed=cfg.master_seed, workers=cfg.workers, output_dir=cfg.output_dir)
    results = run_benchmark(bench)
    emit_report(results, bench)
    print(f"{'N':>8} " + " ".join(f"{'tl=' + format(tl, 'g'):>8}" for tl in bench.tl_values))
    for N in bench.N_list:
        counts = [sum(r.ok and r.report.graph_recovered for r in results if r.N == N and r.tl == tl)
                  for tl in bench.tl_values]
        print(f"{N:8d} " + " ".join(f"{c:>5d}/{cfg.num_graphs}" for c in counts))


if __name__ == "__main__":
    main()

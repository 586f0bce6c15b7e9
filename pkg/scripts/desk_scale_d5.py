"""Desk-scale d = 5 experiment: graph recovery and EDA errors for 10 random models."""
import json
from dataclasses import asdict, dataclass

from _common import parse_overrides

from lingcrel.harness import BenchmarkConfig, emit_report, run_benchmark, summarize


@dataclass
class DeskScaleConfig:
    """d = 5 recovery table."""
    d: int = 5
    p: float = 0.5
    N: int = 20000
    tl: float = 0.15
    num_graphs: int = 10
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "results/desk_scale_d5"


def main():
    cfg = parse_overrides(DeskScaleConfig())
    bench = BenchmarkConfig(d=cfg.d, p=cfg.p, N_list=(cfg.N,), tl=cfg.tl, num_graphs=cfg.num_graphs,
                            master_seed=cfg.master_seed, workers=cfg.workers, output_dir=cfg.output_dir)
    results = run_benchmark(bench)
    emit_report(results, bench)
    print(f"{'trial':>5} {'graph':>12} {'recovered':>9}  EDA errors")
    for r in results:
        if not r.ok:
            print(f"{r.trial:5d} {r.graph_id:>12} {r.status:>9}  {r.error}")
            continue
        eda = " ".join(f"{x:.1e}" for x in r.report.eda_errors)
        print(f"{r.trial:5d} {r.graph_id:>12} {str(r.report.graph_recovered):>9}  {eda}")
    print(json.dumps({"config": asdict(cfg), **summarize(results)}, indent=2))


if __name__ == "__main__":
    main()

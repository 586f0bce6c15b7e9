"""d = 10 experiment at N = 3e5 (slow: roughly half a minute per model on one core)."""
import json
from dataclasses import asdict, dataclass

from _common import parse_overrides

from lingcrel.harness import BenchmarkConfig, emit_report, run_benchmark, summarize


@dataclass
class D10Config:
    """d = 10 recovery table."""
    d: int = 10
    p: float = 0.5
    N: int = 300000
    tl: float = 0.15
    num_graphs: int = 10
    master_seed: int = 0
    workers: int = 1
    # adjacent population psi values are about 2e-3 apart at d = 10
    split_threshold: float = 0.0
    output_dir: str = "results/d10"


def main():
    cfg = parse_overrides(D10Config())
    bench = BenchmarkConfig(d=cfg.d, p=cfg.p, N_list=(cfg.N,), tl=cfg.tl, num_graphs=cfg.num_graphs,
                            master_seed=cfg.master_seed, workers=cfg.workers,
                            split_threshold=cfg.split_threshold, output_dir=cfg.output_dir)
    results = run_benchmark(bench)
    emit_report(results, bench)
    for r in results:
        if r.ok:
            rep = r.report
            print(f"trial {r.trial}: recovered={rep.graph_recovered} max EDA={rep.eda_errors.max():.2e} "
                  f"signal={rep.signal_min:.3f} noise={rep.noise_max:.3f}")
        else:
            print(f"trial {r.trial}: {r.status} {r.error}")
    print(json.dumps({"config": asdict(cfg), **summarize(results)}, indent=2))


if __name__ == "__main__":
    main()

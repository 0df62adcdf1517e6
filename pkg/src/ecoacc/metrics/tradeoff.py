from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from rich import box
from rich.console import Console
from rich.table import Table
from tabulate import tabulate

from ecoacc.config import EcoAccConfig
from ecoacc.core.cache import ArtifactCache
from ecoacc.core.costmap import CostMap
from ecoacc.metrics.montecarlo import run_batch


def parse_lambdas(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def tradeoff(
    config: EcoAccConfig,
    spec: str,
    lambdas: Sequence[float],
    seeds: Sequence[int],
    cost_map: Optional[CostMap] = None,
    cache: Optional[ArtifactCache] = None,
    workers: Optional[int] = None,
    deterministic_spat: bool = False,
) -> pd.DataFrame:
    """Mean MPGe and travel time per travel-time weight, on the same seeds for every weight."""
    rows = []
    for lam in lambdas:
        swept = config.model_copy(update={"planner": config.planner.model_copy(update={"time_weight": float(lam)})})
        result = run_batch(swept, spec, seeds, cost_map, cache, workers, deterministic_spat)
        frame = result.frame()
        rows.append(
            {
                "time_weight": float(lam),
                "episodes": len(result.episodes),
                "failures": len(result.failures),
                "mean_mpge": float(frame["mpge"].mean()) if not frame.empty else np.nan,
                "mean_travel_time_s": float(frame["travel_time_s"].mean()) if not frame.empty else np.nan,
                "violations": result.violations,
            }
        )
    return pd.DataFrame(rows, columns=["time_weight", "episodes", "failures", "mean_mpge", "mean_travel_time_s", "violations"])


def write_tradeoff(frame: pd.DataFrame, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "tradeoff.csv"
    frame.to_csv(path, index=False, float_format="%.9g")
    return path


def display_tradeoff(frame: pd.DataFrame, console: Optional[Console] = None) -> None:
    rows = [
        (f"{r.time_weight:g}", f"{r.mean_mpge:.2f}", f"{r.mean_travel_time_s:.1f}", str(r.episodes))
        for r in frame.itertuples()
    ]
    headers = ["λ", "Mean MPGe", "Mean travel time (s)", "Episodes"]
    if console is None:
        print(tabulate(rows, headers=headers, tablefmt="simple"))
        return

    table = Table(title="Energy / travel-time trade-off", box=box.ROUNDED, border_style="green")
    for header in headers:
        table.add_column(header, justify="right")
    for row in rows:
        table.add_row(*row)
    console.print(table)

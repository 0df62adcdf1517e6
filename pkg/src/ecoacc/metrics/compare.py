"""Paired comparisons of two controller specifiers on shared scenario seeds."""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from rich import box
from rich.console import Console
from rich.table import Table
from tabulate import tabulate

from ecoacc.config import EcoAccConfig
from ecoacc.core.cache import ArtifactCache
from ecoacc.core.costmap import CostMap
from ecoacc.metrics.montecarlo import MonteCarloResult, run_batch

PAIRED_FIELDS = ("mpge", "travel_time_s", "fuel_gal", "elec_kwh", "final_soc")


@dataclass
class Comparison:
    a: MonteCarloResult
    b: MonteCarloResult

    def paired(self) -> pd.DataFrame:
        """One row per seed that succeeded under both specifiers; ``delta_x = x_a - x_b``."""
        left = self.a.frame().set_index("seed")[list(PAIRED_FIELDS)]
        right = self.b.frame().set_index("seed")[list(PAIRED_FIELDS)]
        joined = left.join(right, lsuffix="_a", rsuffix="_b", how="inner")
        for name in PAIRED_FIELDS:
            joined[f"delta_{name}"] = joined[f"{name}_a"] - joined[f"{name}_b"]
        return joined.reset_index()

    def summary(self) -> Dict[str, Dict[str, float]]:
        paired = self.paired()
        result = {}
        for name in PAIRED_FIELDS:
            a, b = paired[f"{name}_a"].to_numpy(), paired[f"{name}_b"].to_numpy()
            mean_b = float(np.mean(b)) if b.size else float("nan")
            result[name] = {
                "mean_a": float(np.mean(a)) if a.size else float("nan"),
                "mean_b": mean_b,
                "mean_delta": float(np.mean(a - b)) if a.size else float("nan"),
                "relative_change": float(np.mean(a) / mean_b - 1.0) if a.size and mean_b else float("nan"),
                "share_a_greater": float(np.mean(a > b)) if a.size else float("nan"),
            }
        return result

    def write(self, out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"compare_{self.a.mode}_vs_{self.b.mode}".replace(":", "_")
        path = out_dir / f"{stem}.csv"
        self.paired().to_csv(path, index=False, float_format="%.9g")
        return path

    def display(self, console: Optional[Console] = None) -> None:
        rows = [
            (
                name,
                f"{s['mean_a']:.3f}",
                f"{s['mean_b']:.3f}",
                f"{s['mean_delta']:+.3f}",
                f"{100 * s['relative_change']:+.2f}%",
                f"{100 * s['share_a_greater']:.0f}%",
            )
            for name, s in self.summary().items()
        ]
        headers = ["Metric", self.a.mode, self.b.mode, "Mean delta", "Relative", "A > B"]
        if console is None:
            print(tabulate(rows, headers=headers, tablefmt="simple"))
            return

        table = Table(title=f"{len(self.paired())} paired seeds", box=box.ROUNDED, border_style="magenta")
        for i, header in enumerate(headers):
            table.add_column(header, style="blue" if i == 0 else None, justify="left" if i == 0 else "right")
        for row in rows:
            table.add_row(*row)
        console.print(table)


def compare(
    config: EcoAccConfig,
    spec_a: str,
    spec_b: str,
    seeds: Sequence[int],
    cost_map: Optional[CostMap] = None,
    cache: Optional[ArtifactCache] = None,
    workers: Optional[int] = None,
    deterministic_spat: bool = False,
) -> Comparison:
    a = run_batch(config, spec_a, seeds, cost_map, cache, workers, deterministic_spat)
    b = run_batch(config, spec_b, seeds, cost_map, cache, workers, deterministic_spat)
    return Comparison(a, b)

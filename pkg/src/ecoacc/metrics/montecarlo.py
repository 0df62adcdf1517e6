"""Seeded Monte-Carlo batches of closed-loop episodes."""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from rich import box
from rich.console import Console
from rich.table import Table
from tabulate import tabulate

from ecoacc.config import EcoAccConfig
from ecoacc.core.cache import ArtifactCache
from ecoacc.core.costmap import CostMap
from ecoacc.core.signals import sample_scenario
from ecoacc.core.sim import EpisodeArtifacts, SimTrace, prepare_artifacts, run_episode
from ecoacc.errors import ConfigError, EcoAccError
from ecoacc.metrics.energy import EpisodeMetrics, episode_metrics
from ecoacc.plugins.manager import PluginManager

logger = logging.getLogger(__name__)

SUMMARY_FIELDS = ("mpge", "travel_time_s", "fuel_gal", "elec_kwh", "final_soc")
MODES = ("eco-acc-receding", "eco-acc-global", "acc-only")
VARIANTS = ("power-map", "wheel-energy")


def parse_mode(spec: str) -> Tuple[str, Optional[str]]:
    """Split a ``mode[:variant]`` specifier, e.g. ``eco-acc-receding:wheel-energy``."""
    mode, _, variant = spec.partition(":")
    if mode not in MODES:
        raise ConfigError(f"Unknown controller mode '{mode}'; expected one of {', '.join(MODES)}")
    if variant and variant not in VARIANTS:
        raise ConfigError(f"Unknown planner variant '{variant}'; expected one of {', '.join(VARIANTS)}")
    return mode, variant or None


def configure(config: EcoAccConfig, spec: str) -> EcoAccConfig:
    mode, variant = parse_mode(spec)
    updates = {"sim": config.sim.model_copy(update={"mode": mode})}
    if variant is not None:
        updates["planner"] = config.planner.model_copy(update={"energy_cost": variant})
    return config.model_copy(update=updates)


def mode_label(config: EcoAccConfig) -> str:
    if config.planner.energy_cost == "power-map":
        return config.sim.mode
    return f"{config.sim.mode}:{config.planner.energy_cost}"


def simulate_seed(artifacts: EpisodeArtifacts, seed: int) -> Tuple[SimTrace, EpisodeMetrics]:
    config = artifacts.config
    scenario = sample_scenario(config.route, config.traffic, seed, deterministic=artifacts.deterministic_spat)
    controller = PluginManager().create(config.sim.mode)
    if controller is None:
        raise ConfigError(f"Controller '{config.sim.mode}' is not available")
    trace = run_episode(artifacts, scenario, controller)
    return trace, episode_metrics(trace.totals, seed, mode_label(config))


_worker_artifacts: Optional[EpisodeArtifacts] = None


def _init_worker(artifacts: EpisodeArtifacts) -> None:
    global _worker_artifacts
    _worker_artifacts = artifacts


def _worker_job(seed: int):
    return _episode_job(_worker_artifacts, seed)


def _episode_job(artifacts: EpisodeArtifacts, seed: int):
    try:
        _, metrics = simulate_seed(artifacts, seed)
        return seed, metrics, None
    except EcoAccError as e:
        return seed, None, f"{type(e).__name__}: {e}"
    except Exception as e:
        logger.exception("Episode %d raised an unexpected error", seed)
        return seed, None, f"{type(e).__name__}: {e}"


@dataclass
class MonteCarloResult:
    mode: str
    episodes: List[EpisodeMetrics]
    failures: Dict[int, str] = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([m.to_dict() for m in self.episodes])

    @property
    def violations(self) -> int:
        return sum(m.violations for m in self.episodes)

    def summary(self) -> Dict[str, object]:
        stats = {}
        frame = self.frame()
        for name in SUMMARY_FIELDS:
            values = frame[name].to_numpy(dtype=float) if not frame.empty else np.array([])
            stats[name] = _describe(values)
        return {
            "mode": self.mode,
            "episodes": len(self.episodes),
            "violations": self.violations,
            "failures": {str(seed): message for seed, message in sorted(self.failures.items())},
            "metrics": stats,
        }

    def write(self, out_dir: Path, stem: Optional[str] = None) -> Tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or f"montecarlo_{self.mode.replace(':', '_')}"
        csv_path = out_dir / f"{stem}.csv"
        json_path = out_dir / f"{stem}.json"
        self.frame().to_csv(csv_path, index=False, float_format="%.9g")
        json_path.write_text(json.dumps(self.summary(), indent=2), encoding="utf-8")
        return csv_path, json_path

    def display(self, console: Optional[Console] = None) -> None:
        summary = self.summary()["metrics"]
        rows = [
            (name, f"{s['mean']:.3f}", f"{s['median']:.3f}", f"{s['std']:.3f}", f"{s['q05']:.3f}", f"{s['q95']:.3f}")
            for name, s in summary.items()
        ]
        headers = ["Metric", "Mean", "Median", "Std", "5%", "95%"]
        if console is None:
            print(tabulate(rows, headers=headers, tablefmt="simple"))
            return

        table = Table(title=f"{self.mode}: {len(self.episodes)} episodes", box=box.ROUNDED, border_style="cyan")
        for i, header in enumerate(headers):
            table.add_column(header, style="blue" if i == 0 else None, justify="left" if i == 0 else "right")
        for row in rows:
            table.add_row(*row)
        console.print(table)
        if self.failures:
            console.print(f"[yellow]{len(self.failures)} episode(s) failed: {', '.join(map(str, sorted(self.failures)))}[/yellow]")


def _describe(values: np.ndarray) -> Dict[str, float]:
    if values.size == 0:
        return {key: float("nan") for key in ("mean", "median", "std", "q05", "q95")}
    return {
        "mean": float(np.mean(values)),
        "median": float(np.median(values)),
        "std": float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
        "q05": float(np.quantile(values, 0.05)),
        "q95": float(np.quantile(values, 0.95)),
    }


def monte_carlo(
    artifacts: EpisodeArtifacts,
    seeds: Sequence[int],
    workers: Optional[int] = None,
    on_episode: Optional[Callable[[int], None]] = None,
) -> MonteCarloResult:
    """Run one episode per seed; failed episodes are recorded, never fatal to the batch."""
    config = artifacts.config
    if config.sim.mode == "eco-acc-receding":
        # tails are computed here once and shipped to the workers
        artifacts.terminal.table(0)

    outcomes = []
    if workers == 1 or len(seeds) <= 1:
        for seed in seeds:
            outcomes.append(_episode_job(artifacts, seed))
            if on_episode:
                on_episode(seed)
    else:
        # one copy of the artifacts per worker process
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(artifacts,)) as executor:
            for outcome in executor.map(_worker_job, seeds):
                outcomes.append(outcome)
                if on_episode:
                    on_episode(outcome[0])

    episodes, failures = [], {}
    # seed order keeps summaries independent of completion order
    for seed, metrics, error in sorted(outcomes, key=lambda outcome: outcome[0]):
        if error is None:
            episodes.append(metrics)
        else:
            logger.warning("Episode %d failed: %s", seed, error)
            failures[seed] = error

    mode = mode_label(config)
    logger.info("Monte-Carlo %s: %d episodes, %d failures", mode, len(episodes), len(failures))
    return MonteCarloResult(mode, episodes, failures)


def run_batch(
    config: EcoAccConfig,
    spec: str,
    seeds: Sequence[int],
    cost_map: Optional[CostMap] = None,
    cache: Optional[ArtifactCache] = None,
    workers: Optional[int] = None,
    deterministic_spat: bool = False,
    on_episode: Optional[Callable[[int], None]] = None,
) -> MonteCarloResult:
    artifacts = prepare_artifacts(
        configure(config, spec), cost_map=cost_map, cache=cache, workers=workers, deterministic_spat=deterministic_spat
    )
    return monte_carlo(artifacts, seeds, workers=workers, on_episode=on_episode)

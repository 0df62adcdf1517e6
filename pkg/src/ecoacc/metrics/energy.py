from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

import numpy as np
from rich.console import Console
from rich.table import Table
from tabulate import tabulate

from ecoacc.errors import ZeroEnergy

# SI in traces; these are the only conversions used for reporting.
METERS_PER_MILE = 1609.344
KWH_PER_GALLON = 33.7
JOULES_PER_KWH = 3.6e6


def mpge(fuel_gal: float, elec_kwh: float, distance_mi: float) -> float:
    equivalent_gal = fuel_gal + elec_kwh / KWH_PER_GALLON
    if distance_mi <= 0 or equivalent_gal <= 0:
        raise ZeroEnergy(f"MPGe undefined for {distance_mi:.4f} mi on {equivalent_gal:.6f} gal-equivalent")
    return distance_mi / equivalent_gal


def wheel_energy_cost_variant(v, t_w, wheel_radius: float, step_m: float = 1.0):
    """Positive wheel work over one spatial step, with no credit for regeneration."""
    _, t_w = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(t_w, dtype=float))
    return np.maximum(t_w, 0.0) * step_m / wheel_radius


@dataclass(frozen=True)
class EpisodeMetrics:
    seed: int
    mode: str
    fuel_gal: float
    elec_kwh: float
    distance_mi: float
    travel_time_s: float
    mpge: float
    initial_soc: float
    final_soc: float
    red_violations: int = 0
    gap_violations: int = 0
    accel_violations: int = 0

    @property
    def violations(self) -> int:
        return self.red_violations + self.gap_violations

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def episode_metrics(totals: Dict[str, float], seed: int, mode: str) -> EpisodeMetrics:
    """Convert SI episode totals (J, m, s) into reporting units."""
    fuel_gal = totals["fuel_energy_j"] / JOULES_PER_KWH / KWH_PER_GALLON
    elec_kwh = totals["battery_energy_j"] / JOULES_PER_KWH
    distance_mi = totals["distance_m"] / METERS_PER_MILE
    return EpisodeMetrics(
        seed=seed,
        mode=mode,
        fuel_gal=fuel_gal,
        elec_kwh=elec_kwh,
        distance_mi=distance_mi,
        travel_time_s=totals["travel_time_s"],
        mpge=mpge(fuel_gal, elec_kwh, distance_mi),
        initial_soc=totals["initial_soc"],
        final_soc=totals["final_soc"],
        red_violations=int(totals.get("red_violations", 0)),
        gap_violations=int(totals.get("gap_violations", 0)),
        accel_violations=int(totals.get("accel_violations", 0)),
    )


def display_episode(metrics: EpisodeMetrics, console: Optional[Console] = None) -> None:
    rows = [
        ("Travel time (s)", f"{metrics.travel_time_s:.1f}"),
        ("Distance (mi)", f"{metrics.distance_mi:.4f}"),
        ("Fuel (gal)", f"{metrics.fuel_gal:.5f}"),
        ("Battery (kWh)", f"{metrics.elec_kwh:.4f}"),
        ("MPGe", f"{metrics.mpge:.2f}"),
        ("SOC", f"{metrics.initial_soc:.3f} -> {metrics.final_soc:.3f}"),
        ("Violations (red/gap/accel)", f"{metrics.red_violations}/{metrics.gap_violations}/{metrics.accel_violations}"),
    ]
    if console is None:
        print(tabulate(rows, headers=["Metric", "Value"], tablefmt="simple"))
        return

    table = Table(title=f"Episode {metrics.seed} ({metrics.mode})")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    for name, value in rows:
        table.add_row(name, value)
    console.print(table)

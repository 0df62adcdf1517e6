from pathlib import Path
from typing import Optional

import typer
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from ecoacc.config import EcoAccConfig, config_hash, load_config
from ecoacc.core.cache import ArtifactCache
from ecoacc.core.costmap import build_cost_map, cached_cost_map, load_cost_map, save_cost_map
from ecoacc.core.planner import planned_trajectory
from ecoacc.core.signals import live_spat, load_live_spat, load_scenario, sample_scenario, save_scenario
from ecoacc.core.sim import EpisodeArtifacts, light_ahead, prepare_artifacts, run_episode
from ecoacc.errors import ConfigError, EcoAccError
from ecoacc.log import setup_logging
from ecoacc.metrics.compare import compare
from ecoacc.metrics.energy import display_episode, episode_metrics
from ecoacc.metrics.montecarlo import configure, mode_label, run_batch
from ecoacc.metrics.tradeoff import display_tradeoff, parse_lambdas, tradeoff, write_tradeoff
from ecoacc.plugins.interface import Snapshot
from ecoacc.plugins.manager import PluginManager

app = typer.Typer(help="Receding-horizon eco-driving ACC simulator for plug-in hybrids", add_completion=False)
costmap_app = typer.Typer(help="Powertrain cost-map artifacts", add_completion=False)
app.add_typer(costmap_app, name="costmap")
console = Console()

CONFIG_OPTION = typer.Option(None, "--config", "-c", help="Corridor configuration JSON (defaults to the shipped corridor)")
OUT_DIR_OPTION = typer.Option(Path("out"), "--out-dir", "-o", help="Directory for CSV/JSON outputs")


def load(config_path: Optional[Path], measured_latency: bool = False) -> EcoAccConfig:
    config = load_config(config_path)
    if measured_latency:
        config = config.model_copy(update={"sim": config.sim.model_copy(update={"measured_latency": True})})
    return config


def spinner():
    return Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console)


def build_artifacts(
    config: EcoAccConfig,
    workers: Optional[int],
    deterministic_spat: bool,
    cost_map_path: Optional[Path] = None,
) -> EpisodeArtifacts:
    cache = ArtifactCache()
    if cost_map_path is not None:
        cost_map = load_cost_map(cost_map_path, config_hash(config.powertrain, config.vehicle, config.costmap))
    else:
        with spinner() as progress:
            progress.add_task("Loading cost map...", total=None)
            cost_map = cached_cost_map(config.powertrain, config.vehicle, config.costmap, cache=cache, workers=workers)
    return prepare_artifacts(config, cost_map=cost_map, cache=cache, workers=workers, deterministic_spat=deterministic_spat)


def fail(error: EcoAccError) -> None:
    console.print(f"[bold red]Error:[/bold red] {error}")
    raise typer.Exit(code=2)


def check_violations(count: int, allow: bool) -> None:
    if count and not allow:
        console.print(f"[bold red]{count} safety violation(s)[/bold red]")
        raise typer.Exit(code=1)


def display_run_summary(config: EcoAccConfig, label: str, extra: Optional[dict] = None) -> None:
    summary = Table.grid(padding=(0, 1))
    summary.add_row("[bold cyan]Controller:", f"[white]{label}")
    summary.add_row("[bold cyan]Corridor:", f"[white]{config.route.length_m:.0f} m, {len(config.route.intersections)} intersections")
    summary.add_row("[bold cyan]Horizon:", f"[white]{config.planner.horizon_m:.0f} m, λ = {config.planner.time_weight:g}")
    for key, value in (extra or {}).items():
        summary.add_row(f"[bold cyan]{key}:", f"[white]{value}")
    console.print(Panel(summary, title="ECO-ACC", border_style="blue"))


@costmap_app.command("build")
def costmap_build(
    config_path: Optional[Path] = CONFIG_OPTION,
    out_dir: Path = OUT_DIR_OPTION,
    params_path: Optional[Path] = typer.Option(None, "--params", help="Configuration JSON holding the powertrain parameters"),
    out: Optional[Path] = typer.Option(None, "--out", help="Artifact path (defaults to <out-dir>/costmap.npz)"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Worker processes"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    setup_logging(verbose, console)
    try:
        config = load(params_path or config_path)
        with spinner() as progress:
            progress.add_task("Building cost map...", total=None)
            cost_map = build_cost_map(config.powertrain, config.vehicle, config.costmap, workers=workers)
    except EcoAccError as e:
        fail(e)

    path = out or out_dir / "costmap.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_cost_map(cost_map, path)
    console.print(f"[green]Cost map written to {path}[/green] ({cost_map.metadata['admissible_cells']} admissible cells)")


@app.command("plan")
def plan(
    config_path: Optional[Path] = CONFIG_OPTION,
    out_dir: Path = OUT_DIR_OPTION,
    position: float = typer.Option(0.0, "--position", help="Anchor position (m)"),
    speed: float = typer.Option(10.0, "--speed", help="Anchor speed (m/s)"),
    time: float = typer.Option(0.0, "--time", help="Anchor time (s)"),
    seed: int = typer.Option(0, "--seed", help="Scenario seed for the live SPaT"),
    cost_map_path: Optional[Path] = typer.Option(None, "--cost-map", help="Cost-map artifact written by `costmap build`"),
    spat_path: Optional[Path] = typer.Option(None, "--spat", help="Live SPaT snapshot JSON for the next light"),
    deterministic_spat: bool = typer.Option(False, "--deterministic-spat"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    setup_logging(verbose, console)
    try:
        config = configure(load(config_path), "eco-acc-receding")
        artifacts = build_artifacts(config, workers, deterministic_spat, cost_map_path)
        scenario = sample_scenario(config.route, config.traffic, seed, deterministic=deterministic_spat)
        if spat_path is not None:
            live = load_live_spat(spat_path)
            if live.intersection >= len(artifacts.route.intersections):
                raise ConfigError(f"{spat_path}: intersection {live.intersection} is not on the corridor")
        else:
            light = light_ahead(artifacts.route, scenario.signals, position, time)
            live = None if light is None else live_spat(scenario.signals[light.index], time, light.index)

        controller = PluginManager().create("eco-acc-receding")
        controller.setup(artifacts, scenario)
        with spinner() as progress:
            progress.add_task("Solving horizon...", total=None)
            policy = controller.plan(Snapshot(0, time, position, speed, config.sim.initial_soc, live)).policy
        trajectory = planned_trajectory(policy, controller.context)
    except EcoAccError as e:
        fail(e)

    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "plan.csv"
    trajectory.to_csv(path, index=False, float_format="%.9g")
    display_run_summary(
        config,
        "eco-acc-receding",
        {"Anchor": f"{position:.0f} m, {speed:.1f} m/s, t = {time:.1f} s", "Solve time": f"{policy.solve_time_s:.2f} s"},
    )
    end = trajectory.iloc[-1]
    console.print(f"Planned arrival at {end.position_m:.0f} m after {end.t - time:.1f} s; trajectory written to {path}")


@app.command("simulate")
def simulate(
    config_path: Optional[Path] = CONFIG_OPTION,
    out_dir: Path = OUT_DIR_OPTION,
    mode: str = typer.Option("eco-acc-receding", "--mode", "-m", help="Controller, optionally with a planner variant (mode:variant)"),
    seed: int = typer.Option(0, "--seed", help="Scenario seed"),
    scenario_file: Optional[Path] = typer.Option(None, "--scenario-file", help="Replay a saved scenario JSON"),
    trace_out: Optional[Path] = typer.Option(None, "--trace-out", help="Trace CSV path"),
    deterministic_spat: bool = typer.Option(False, "--deterministic-spat"),
    measured_latency: bool = typer.Option(False, "--measured-latency", help="Activate replans after their measured solve time"),
    allow_violations: bool = typer.Option(False, "--allow-violations"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    setup_logging(verbose, console)
    try:
        config = configure(load(config_path, measured_latency), mode)
        artifacts = build_artifacts(config, workers, deterministic_spat)
        if scenario_file is not None:
            scenario = load_scenario(scenario_file)
        else:
            scenario = sample_scenario(config.route, config.traffic, seed, deterministic=deterministic_spat)
        controller = PluginManager().create(config.sim.mode)
        display_run_summary(config, mode_label(config), {"Scenario": str(scenario.scenario_id), "Leads": str(len(scenario.leads))})
        with spinner() as progress:
            progress.add_task("Simulating episode...", total=None)
            trace = run_episode(artifacts, scenario, controller)
        metrics = episode_metrics(trace.totals, scenario.scenario_id, mode_label(config))
    except EcoAccError as e:
        fail(e)

    trace_path = trace_out or out_dir / f"trace_{scenario.scenario_id}.csv"
    trace_path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_csv(trace_path)
    display_episode(metrics, console=console)
    for violation in trace.violations:
        console.print(f"[red]{violation.time_s:7.1f} s  {violation.kind}: {violation.detail}[/red]")
    console.print(f"Trace written to {trace_path}")
    check_violations(metrics.violations, allow_violations)


@app.command("montecarlo")
def montecarlo(
    config_path: Optional[Path] = CONFIG_OPTION,
    out_dir: Path = OUT_DIR_OPTION,
    n: int = typer.Option(130, "--n", "-n", help="Number of episodes"),
    mode: str = typer.Option("eco-acc-receding", "--mode", "-m"),
    seed: int = typer.Option(0, "--seed", help="First scenario seed"),
    deterministic_spat: bool = typer.Option(False, "--deterministic-spat"),
    measured_latency: bool = typer.Option(False, "--measured-latency"),
    allow_violations: bool = typer.Option(False, "--allow-violations"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    setup_logging(verbose, console)
    seeds = list(range(seed, seed + n))
    try:
        config = load(config_path, measured_latency)
        cost_map = cached_cost_map(config.powertrain, config.vehicle, config.costmap, workers=workers)
        progress = Progress(
            SpinnerColumn(), TextColumn("[progress.description]{task.description}"), BarColumn(), MofNCompleteColumn(), console=console
        )
        with progress:
            task = progress.add_task(f"Running {mode}...", total=n)
            result = run_batch(
                config,
                mode,
                seeds,
                cost_map=cost_map,
                cache=ArtifactCache(),
                workers=workers,
                deterministic_spat=deterministic_spat,
                on_episode=lambda _: progress.advance(task),
            )
    except EcoAccError as e:
        fail(e)

    result.display(console)
    csv_path, json_path = result.write(out_dir)
    console.print(f"Episodes written to {csv_path}, summary to {json_path}")
    check_violations(result.violations, allow_violations)


@app.command("compare")
def compare_modes(
    config_path: Optional[Path] = CONFIG_OPTION,
    out_dir: Path = OUT_DIR_OPTION,
    a: str = typer.Option("eco-acc-receding", "--a", help="First controller (mode[:variant])"),
    b: str = typer.Option("acc-only", "--b", help="Second controller (mode[:variant])"),
    n: int = typer.Option(30, "--n", "-n"),
    seed: int = typer.Option(0, "--seed"),
    deterministic_spat: bool = typer.Option(False, "--deterministic-spat"),
    allow_violations: bool = typer.Option(False, "--allow-violations"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    setup_logging(verbose, console)
    try:
        config = load(config_path)
        cost_map = cached_cost_map(config.powertrain, config.vehicle, config.costmap, workers=workers)
        with spinner() as progress:
            progress.add_task(f"Running {a} and {b} on {n} seeds...", total=None)
            comparison = compare(
                config, a, b, list(range(seed, seed + n)), cost_map, ArtifactCache(), workers, deterministic_spat
            )
    except EcoAccError as e:
        fail(e)

    comparison.display(console)
    console.print(f"Paired results written to {comparison.write(out_dir)}")
    check_violations(comparison.a.violations + comparison.b.violations, allow_violations)


@app.command("tradeoff")
def tradeoff_sweep(
    config_path: Optional[Path] = CONFIG_OPTION,
    out_dir: Path = OUT_DIR_OPTION,
    lambdas: str = typer.Option("10000,34000,80000", "--lambdas", help="Comma-separated time weights"),
    mode: str = typer.Option("eco-acc-receding", "--mode", "-m"),
    n: int = typer.Option(20, "--n", "-n"),
    seed: int = typer.Option(0, "--seed"),
    deterministic_spat: bool = typer.Option(False, "--deterministic-spat"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    setup_logging(verbose, console)
    try:
        weights = parse_lambdas(lambdas)
    except ValueError:
        raise typer.BadParameter(f"expected comma-separated numbers, got '{lambdas}'", param_hint="--lambdas")
    try:
        config = load(config_path)
        cost_map = cached_cost_map(config.powertrain, config.vehicle, config.costmap, workers=workers)
        with spinner() as progress:
            progress.add_task(f"Sweeping {len(weights)} time weights...", total=None)
            frame = tradeoff(config, mode, weights, list(range(seed, seed + n)), cost_map, ArtifactCache(), workers, deterministic_spat)
    except EcoAccError as e:
        fail(e)

    display_tradeoff(frame, console)
    console.print(f"Trade-off written to {write_tradeoff(frame, out_dir)}")


@app.command("scenario")
def scenario(
    config_path: Optional[Path] = CONFIG_OPTION,
    seed: int = typer.Option(0, "--seed"),
    out: Path = typer.Option(Path("scenario.json"), "--out", help="Scenario JSON path"),
    deterministic_spat: bool = typer.Option(False, "--deterministic-spat"),
):
    try:
        config = load(config_path)
    except EcoAccError as e:
        fail(e)
    sampled = sample_scenario(config.route, config.traffic, seed, deterministic=deterministic_spat)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scenario(sampled, out)

    table = Table(title=f"Scenario {seed}", box=box.ROUNDED, border_style="cyan")
    table.add_column("Intersection", style="green")
    table.add_column("Cycle (s)", justify="right")
    table.add_column("Red (s)", justify="right")
    table.add_column("Offset (s)", justify="right")
    for spec in sampled.signals:
        table.add_row(spec.name, f"{spec.cycle_s:.0f}", f"{spec.red_s:.1f}", f"{spec.offset_s:.1f}")
    console.print(table)
    console.print(f"{len(sampled.leads)} lead vehicle(s); scenario written to {out}")


@app.command("controllers")
def list_controllers():
    plugin_manager = PluginManager()
    plugins = plugin_manager.discover_plugins()

    table = Table(title="Available Controllers", box=box.ROUNDED, border_style="cyan")
    table.add_column("ID", style="green")
    table.add_column("Name", style="blue")
    table.add_column("Description")

    for plugin_id, plugin_class in sorted(plugins.items()):
        plugin = plugin_class()
        table.add_row(plugin_id, plugin.name, plugin.description)

    console.print(table)


@app.callback()
def main():
    pass


if __name__ == "__main__":
    app()

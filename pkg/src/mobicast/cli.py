"""Command line: synthetic worlds, training, forecasting, policy simulation, serving.

Every command takes ``--seed`` and ``--config FILE`` (a JSON object whose
keys are the long flag names; explicit flags win). Data-file flags fall
back to ``$MOBICAST_DATA_DIR``. Artifact-producing commands write a
``*.manifest.json`` next to their outputs recording the exact
configuration, input digests and timing.

Exit codes: 0 success, 1 validation or usage problem, 2 runtime failure.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from datetime import date, timedelta
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import checkpoint as ck
from . import data as dt
from . import model as md
from . import policy as pl
from . import train as tr
from .errors import (
    CheckpointError,
    ContractError,
    DataValidationError,
    DivergenceError,
    DomainError,
    IngestionError,
    ScenarioFormatError,
    ShapeError,
)

DATA_DIR_ENV = "MOBICAST_DATA_DIR"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(
    out_path: Path,
    command: str,
    config: dict,
    seed: int | None,
    inputs: list[Path],
    outputs: list[Path],
    started: float,
) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {p.name: _sha256(p) for p in inputs if p.exists()},
        "outputs": [str(p) for p in outputs],
        "duration_seconds": round(time.time() - started, 3),
        "version": __version__,
    }
    out_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out_path


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise click.UsageError(f"--config {path}:{e.lineno}: {e.msg}") from None
    if not isinstance(payload, dict):
        raise click.UsageError("--config file must hold a JSON object")
    return payload


def _merged(ctx: click.Context, file_cfg: dict) -> dict:
    """Config-file values fill in for flags the user did not set explicitly."""
    out = {}
    for p in ctx.command.params:
        name = p.name
        src = ctx.get_parameter_source(name)
        if (
            src == click.core.ParameterSource.DEFAULT
            and name in file_cfg
        ):
            out[name] = file_cfg[name]
        else:
            out[name] = ctx.params[name]
    return out


def _resolve_data_paths(cases, mobility, population, data_dir) -> tuple[Path, Path, Path]:
    base = Path(data_dir or os.environ.get(DATA_DIR_ENV, "."))
    return (
        Path(cases) if cases else base / "cases.csv",
        Path(mobility) if mobility else base / "mobility.csv",
        Path(population) if population else base / "population.csv",
    )


def data_options(f):
    f = click.option("--cases", default=None, help="cases.csv path")(f)
    f = click.option("--mobility", default=None, help="mobility.csv path")(f)
    f = click.option("--population", default=None, help="population.csv path")(f)
    f = click.option(
        "--data-dir",
        default=None,
        help=f"directory holding the three CSVs (default ${DATA_DIR_ENV} or .)",
    )(f)
    return f


@click.group()
@click.version_option(version=__version__, prog_name="mobicast")
def cli():
    """Mobility-aware epidemic forecasting and policy simulation."""


@cli.command()
@click.option("--regions", default=8, show_default=True, help="number of regions (>= 2)")
@click.option("--days", default=240, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--beta", default=dt.SynthConfig.beta, show_default=True)
@click.option("--gamma", default=dt.SynthConfig.gamma, show_default=True)
@click.option("--travel-intensity", default=1.0, show_default=True)
@click.option("--weekly-amplitude", default=0.3, show_default=True)
@click.option("--start-date", default="2021-01-03", show_default=True)
@click.option("--out-dir", default="data", show_default=True)
@click.option("--config", "config_file", default=None, help="JSON defaults for these flags")
@click.pass_context
def synth(ctx, **_kw):
    """Generate a synthetic mobility-coupled SIR panel as CSV files."""
    started = time.time()
    v = _merged(ctx, _load_config_file(ctx.params["config_file"]))
    cfg = dt.SynthConfig(
        n_regions=int(v["regions"]),
        days=int(v["days"]),
        seed=int(v["seed"]),
        beta=float(v["beta"]),
        gamma=float(v["gamma"]),
        travel_intensity=float(v["travel_intensity"]),
        weekly_amplitude=float(v["weekly_amplitude"]),
        start_date=date.fromisoformat(v["start_date"]),
    )
    panel = dt.synth_generate(cfg)
    out_dir = Path(v["out_dir"])
    written = dt.write_panel_csv(panel, out_dir, provenance=cfg.to_dict())
    _write_manifest(
        out_dir / "synth.manifest.json", "synth", cfg.to_dict(), cfg.seed, [], written, started
    )
    click.echo(f"wrote {len(written)} files to {out_dir} ({cfg.n_regions} regions, {cfg.days} days)")


@cli.command()
@data_options
@click.option("--window", default=15, show_default=True, help="history window length K")
@click.option("--epochs", default=150, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--decay-every", default=10, show_default=True)
@click.option("--decay-factor", default=0.9, show_default=True)
@click.option("--w1", default=1.0, show_default=True, help="case MAE weight")
@click.option("--w2", default=1.0, show_default=True, help="case MSE weight")
@click.option("--w3", default=0.5, show_default=True, help="mobility MSE weight")
@click.option("--clip-norm", default=5.0, show_default=True)
@click.option("--batch-size", default=32, show_default=True, help="0 means full batch")
@click.option("--val-fraction", default=0.1, show_default=True)
@click.option("--edge-mode", type=click.Choice(md.EDGE_MODES), default="learned", show_default=True)
@click.option("--no-attention", is_flag=True, help="replace attention with the last hidden state")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="model.ckpt", show_default=True, help="checkpoint path")
@click.option(
    "--eval-report",
    is_flag=True,
    help="also write per-epi-week MAE vs persistence over the validation span",
)
@click.option("--config", "config_file", default=None)
@click.pass_context
def train(ctx, **_kw):
    """Train the two-stream model and write checkpoint, logs and attention CSV."""
    started = time.time()
    v = _merged(ctx, _load_config_file(ctx.params["config_file"]))
    paths = _resolve_data_paths(v["cases"], v["mobility"], v["population"], v["data_dir"])
    panel = dt.load_panel(*paths)
    cfg = tr.TrainConfig(
        epochs=int(v["epochs"]),
        base_lr=float(v["lr"]),
        decay_every=int(v["decay_every"]),
        decay_factor=float(v["decay_factor"]),
        w1=float(v["w1"]),
        w2=float(v["w2"]),
        w3=float(v["w3"]),
        window=int(v["window"]),
        seed=int(v["seed"]),
        clip_norm=float(v["clip_norm"]),
        edge_mode=v["edge_mode"],
        attention_enabled=not v["no_attention"],
        val_fraction=float(v["val_fraction"]),
        batch_size=(int(v["batch_size"]) or None),
    )
    result = tr.fit(panel, cfg)

    out = Path(v["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    written = [ck.save_checkpoint(out, result.params, result.stats)]
    written.append(tr.write_training_log(result.log, out.with_suffix(".training_log.csv")))
    profile = tr.attention_profile(result.params, result.stats, panel)
    written.append(tr.write_attention_csv(profile, out.with_suffix(".attention.csv")))
    if v["eval_report"]:
        n_val = int((panel.n_days - cfg.window) * cfg.val_fraction)
        first_val_target = panel.n_days - max(n_val, 1)
        rows = tr.evaluate_mae(
            result.params, result.stats, panel,
            eval_start=panel.dates[first_val_target], eval_end=panel.dates[-1],
        )
        written.append(tr.write_eval_report(rows, out.with_suffix(".eval.csv")))
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "train",
        {**cfg.__dict__, "model": result.params.config.to_dict()},
        cfg.seed,
        list(paths),
        written,
        started,
    )
    if result.aborted_epoch is not None:
        raise DivergenceError(
            f"training diverged at epoch {result.aborted_epoch}; "
            f"checkpoint holds the best earlier state (epoch {result.best_epoch})"
        )
    click.echo(
        f"trained {cfg.epochs} epochs; best val loss {result.best_val_loss:.6f} "
        f"at epoch {result.best_epoch}; wrote {out}"
    )


def _load_compatible(checkpoint_path: Path, paths) -> tuple:
    params, stats = ck.load_checkpoint(checkpoint_path)
    panel = dt.load_panel(*paths)
    n_ck = params.config.n_regions
    if n_ck != panel.n_regions:
        raise ContractError(
            f"checkpoint expects {n_ck} regions but data has {panel.n_regions}"
        )
    if panel.n_days < params.config.window:
        raise ContractError(
            f"checkpoint window is {params.config.window} days but data has only "
            f"{panel.n_days}"
        )
    return params, stats, panel


@cli.command()
@data_options
@click.option("--checkpoint", default="model.ckpt", show_default=True)
@click.option("--horizon", default=14, show_default=True, help="days to forecast")
@click.option("--out", default="forecast.csv", show_default=True)
@click.option("--seed", default=0, show_default=True, help="recorded in the manifest")
@click.option("--config", "config_file", default=None)
@click.pass_context
def forecast(ctx, **_kw):
    """Autoregressive forecast from the end of the panel: daily + epi-week CSV."""
    started = time.time()
    v = _merged(ctx, _load_config_file(ctx.params["config_file"]))
    paths = _resolve_data_paths(v["cases"], v["mobility"], v["population"], v["data_dir"])
    params, stats, panel = _load_compatible(Path(v["checkpoint"]), paths)
    horizon = int(v["horizon"])
    if horizon < 1:
        raise ContractError("horizon must be >= 1")
    k = params.config.window
    window = dt.window_input(panel, stats, panel.n_days - k, k)
    outs = md.rollout(params, window, horizon)

    out = Path(v["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "region", "predicted_cases"])
        for o in outs:
            for ri, r in enumerate(panel.region_ids):
                w.writerow([o.date.isoformat(), r, repr(float(o.cases_next_raw[ri]))])
    weekly_path = out.with_suffix(".epiweeks.csv")
    weeks = dt.epiweek_aggregate(
        np.vstack([o.cases_next_raw for o in outs]), [o.date for o in outs]
    )
    with open(weekly_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epiweek_start", "region", "predicted_cases", "complete"])
        for wk in weeks:
            for ri, r in enumerate(panel.region_ids):
                w.writerow(
                    [wk.start.isoformat(), r, repr(float(wk.totals[ri])), wk.complete]
                )
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "forecast",
        {"horizon": horizon, "checkpoint": str(v["checkpoint"])},
        int(v["seed"]),
        [Path(v["checkpoint"]), *paths],
        [out, weekly_path],
        started,
    )
    click.echo(f"wrote {horizon}-day forecast for {panel.n_regions} regions to {out}")


@cli.command()
@data_options
@click.option("--checkpoint", default="model.ckpt", show_default=True)
@click.option("--scenario", "scenario_file", required=True, help="scenario JSON file")
@click.option("--seed-date", default=None, help="last observed day (default: panel end)")
@click.option("--eval-start", default=None, help="default: day after seed date")
@click.option("--eval-end", default=None, help="default: seed date + horizon")
@click.option("--horizon", default=30, show_default=True)
@click.option("--out", default="impact.csv", show_default=True)
@click.option("--seed", default=0, show_default=True, help="recorded in the manifest")
@click.option("--config", "config_file", default=None)
@click.pass_context
def simulate(ctx, **_kw):
    """Counterfactual mobility scenario vs baseline; impact CSV + JSON."""
    started = time.time()
    v = _merged(ctx, _load_config_file(ctx.params["config_file"]))
    paths = _resolve_data_paths(v["cases"], v["mobility"], v["population"], v["data_dir"])
    params, stats, panel = _load_compatible(Path(v["checkpoint"]), paths)
    scenario = pl.load_scenario(v["scenario_file"])

    seed_d = date.fromisoformat(v["seed_date"]) if v["seed_date"] else panel.dates[-1]
    eval_start = (
        date.fromisoformat(v["eval_start"]) if v["eval_start"] else seed_d + timedelta(days=1)
    )
    eval_end = (
        date.fromisoformat(v["eval_end"])
        if v["eval_end"]
        else seed_d + timedelta(days=int(v["horizon"]))
    )
    report = pl.run_scenario(params, stats, panel, scenario, seed_d, eval_start, eval_end)

    out = Path(v["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    written = [pl.write_impact_csv(report, out)]
    json_path = out.with_suffix(".json")
    json_path.write_text(json.dumps(pl.impact_to_dict(report), indent=2) + "\n")
    written.append(json_path)
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "simulate",
        {
            "scenario": pl.scenario_to_dict(scenario),
            "seed_date": seed_d.isoformat(),
            "eval_start": eval_start.isoformat(),
            "eval_end": eval_end.isoformat(),
        },
        int(v["seed"]),
        [Path(v["checkpoint"]), Path(v["scenario_file"]), *paths],
        written,
        started,
    )
    total = float(report.delta.sum())
    click.echo(f"scenario '{scenario.label or 'unnamed'}': total case delta {total:+.1f}; wrote {out}")


@cli.command()
@data_options
@click.option("--checkpoint", default="model.ckpt", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True, help="loopback by default")
@click.option("--port", default=8711, show_default=True)
@click.option("--seed", default=0, show_default=True, help="unused; accepted for symmetry")
@click.option("--config", "config_file", default=None)
@click.pass_context
def serve(ctx, **_kw):
    """Serve forecasts and scenario evaluation over local HTTP/JSON."""
    v = _merged(ctx, _load_config_file(ctx.params["config_file"]))
    paths = _resolve_data_paths(v["cases"], v["mobility"], v["population"], v["data_dir"])
    params, stats, panel = _load_compatible(Path(v["checkpoint"]), paths)

    from .service import ServiceState, create_app

    state = ServiceState.build(params, stats, panel)
    app = create_app(state)
    import uvicorn

    click.echo(f"serving on http://{v['host']}:{v['port']} (regions={panel.n_regions})")
    uvicorn.run(app, host=v["host"], port=int(v["port"]), log_level="warning")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except (
        IngestionError,
        DataValidationError,
        ScenarioFormatError,
        DomainError,
        ContractError,
        CheckpointError,
        ShapeError,
        FileNotFoundError,
    ) as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except DivergenceError as e:
        click.echo(f"runtime failure: {e}", err=True)
        return 2
    except Exception as e:  # pragma: no cover - unexpected
        click.echo(f"runtime failure: {type(e).__name__}: {e}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

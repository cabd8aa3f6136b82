"""Headless entry points: replay runs, data generation, evaluation, serving.

Every command exits nonzero with a one-line diagnostic on invalid input
and writes plot-ready JSON/JSONL artifacts only; rendering lives in the
dashboard.
"""

from __future__ import annotations

import functools
import json
import socket
from pathlib import Path

import click

from streamlens import __version__
from streamlens.engine import Engine, EngineConfig
from streamlens.ingest import (
    ColumnMapping,
    GroundTruth,
    SourceSpec,
    SyntheticSpec,
    gen_synthetic,
    jacquard_schema,
    open_file,
    write_csv,
    write_jsonl,
)
from streamlens.metrics import evaluate


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
            raise click.ClickException(str(e))

    return wrapper


def _load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_engine_config(path: str | None) -> EngineConfig:
    if path is None:
        return EngineConfig()
    return EngineConfig.from_dict(_load_json(path))


def _default_names(dim: int) -> tuple[str, ...]:
    schema = jacquard_schema()
    if dim == len(schema):
        return schema
    return tuple(f"f{j}" for j in range(dim))


@click.group()
@click.version_option(version=__version__)
def main():
    """Streaming anomaly detection with per-feature explanations."""


@main.command()
@click.option("--input", "input_path", type=click.Path(), default=None,
              help="CSV or JSONL stream to replay.")
@click.option("--synthetic", "synthetic_path", type=click.Path(), default=None,
              help="SyntheticSpec JSON to generate and process.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="EngineConfig JSON; defaults apply when omitted.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--snapshot-every", type=int, default=0,
              help="Dump PDP snapshots every N instances (0 = never).")
@click.option("--timestamp-column", default="timestamp", show_default=True)
@click.option("--impute-last", is_flag=True,
              help="Replace non-finite feature cells with the last valid value.")
@_guarded
def run(input_path, synthetic_path, config_path, out_dir, snapshot_every,
        timestamp_column, impute_last):
    """Process a stream and write session artifacts into --out."""
    if (input_path is None) == (synthetic_path is None):
        raise click.ClickException("exactly one of --input/--synthetic is required")
    config = _load_engine_config(config_path)

    if synthetic_path is not None:
        spec = SyntheticSpec.from_dict(_load_json(synthetic_path))
        if spec.dim != config.dim:
            if config_path is None:
                names = _default_names(spec.dim)
                config = EngineConfig(
                    feature_names=names,
                    forest=config.forest,
                    explain=config.explain,
                    threshold=config.threshold,
                    event_gap=config.event_gap,
                )
            else:
                raise click.ClickException(
                    f"synthetic dim {spec.dim} does not match config dim {config.dim}"
                )
        stream, _truth = gen_synthetic(spec)
    else:
        kind = "jsonl" if str(input_path).endswith((".jsonl", ".ndjson")) else "csv"
        source = SourceSpec(
            kind=kind,
            path=str(input_path),
            mapping=ColumnMapping(timestamp=timestamp_column,
                                  features=config.feature_names),
            impute_last=impute_last,
        )
        stream = open_file(source)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snap_dir = out / "snapshots"
    if snapshot_every:
        snap_dir.mkdir(exist_ok=True)

    engine = Engine(config, session_dir=out)
    processed = 0
    try:
        for instance in stream:
            engine.process(instance)
            processed += 1
            if snapshot_every and processed % snapshot_every == 0:
                dump = {
                    "processed": processed,
                    "instance_id": instance.id,
                    "features": engine.explainer.snapshot(config.feature_names),
                }
                path = snap_dir / f"step_{processed:08d}.json"
                path.write_text(json.dumps(dump), encoding="utf-8")
        events = [e.to_dict() for e in engine.coalesce_events()]
        (out / "events.json").write_text(
            json.dumps({"events": events}), encoding="utf-8"
        )
    finally:
        engine.close()
    click.echo(f"processed {processed} instances -> {out}")


@main.command()
@click.option("--spec", "spec_path", type=click.Path(), required=True,
              help="SyntheticSpec JSON.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv",
              show_default=True)
@_guarded
def gen(spec_path, out_dir, fmt):
    """Generate a synthetic dataset plus its ground-truth sidecar."""
    spec = SyntheticSpec.from_dict(_load_json(spec_path))
    instances, truth = gen_synthetic(spec)
    names = _default_names(spec.dim)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / f"data.{fmt}"
    if fmt == "csv":
        write_csv(data_path, instances, names)
    else:
        write_jsonl(data_path, instances, names)
    truth.to_jsonl(out / "truth.jsonl")
    click.echo(f"wrote {len(instances)} instances -> {data_path}")


@main.command(name="eval")
@click.option("--log", "log_path", type=click.Path(), required=True,
              help="Session records.jsonl from a run.")
@click.option("--truth", "truth_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@_guarded
def eval_cmd(log_path, truth_path, out_path):
    """Score a session log against ground truth (AUC, P/R/F1, latency)."""
    records = []
    with open(log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    truth = GroundTruth.from_jsonl(truth_path)
    result = evaluate(records, truth)
    text = json.dumps(result, indent=2)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    click.echo(text)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--session-dir", type=click.Path(), default=None)
@_guarded
def serve(config_path, port, host, session_dir):
    """Run the HTTP service until interrupted."""
    import uvicorn

    from streamlens.service import create_app

    config = _load_engine_config(config_path)
    # Probe the port first so a conflict yields one clean diagnostic.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as e:
        raise click.ClickException(f"cannot bind {host}:{port}: {e}")
    finally:
        probe.close()
    app = create_app(config, session_dir=session_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()

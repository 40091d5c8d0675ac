"""Command-line entry points for the whole pipeline.

Typical flow on a synthetic run:

    ondkit synth --out data.ondf --seed 7
    ondkit build-bench --dataset data.ondf --run-dir run/ --seed 7
    ondkit train --run-dir run/ --method iconp
    ondkit loop --run-dir run/ --sessions 5 --annotator oracle
    ondkit eval --run-dir run/ --group holdout
    ondkit report --run-dir run/
    ondkit serve --run-dir run/ --port 8000
"""

from __future__ import annotations

import os
import sys

import click

from . import benchkit, evalkit, featurestore, looprunner, report
from .optim import TrainConfig

RUN_DIR_ENV = "OND_RUN_DIR"


def _run_dir_option(f):
    return click.option("--run-dir", envvar=RUN_DIR_ENV, required=True,
                        type=click.Path(), help="run directory (or $OND_RUN_DIR)")(f)


def _fail(msg: str, code: int = 1):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load_dataset_for(run_dir):
    ref = os.path.join(run_dir, "dataset.path")
    if not os.path.exists(ref):
        _fail("run directory has no dataset; run build-bench first")
    with open(ref) as f:
        path, fmt = f.read().strip().split("\t")
    return featurestore.load_dataset(path, fmt)


def _load_state(run_dir):
    if not os.path.exists(os.path.join(run_dir, "state.json")):
        _fail("no checkpoint in run directory; run train first")
    header, records = _load_dataset_for(run_dir)
    return looprunner.load_state(run_dir, header, records)


def _config(run_dir, method, seed, config_file, **overrides) -> TrainConfig:
    if config_file:
        cfg = TrainConfig.from_file(config_file)
        cfg.method = method or cfg.method
        if seed is not None:
            cfg.seed = seed
        for k, v in overrides.items():
            if v is not None:
                setattr(cfg, k, v)
        cfg.validate()
        return cfg
    kwargs = {k: v for k, v in overrides.items() if v is not None}
    if seed is not None:
        kwargs["seed"] = seed
    return TrainConfig.for_method(method or "iconp", **kwargs)


@click.group()
def main():
    """Incremental object-level novelty detection with a feedback loop."""


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--format", "fmt", default="binary", type=click.Choice(["binary", "jsonl"]))
@click.option("--seed", default=0, type=int)
@click.option("--dim", default=64, type=int)
@click.option("--id-clusters", default=5, type=int)
@click.option("--ood-clusters", default=27, type=int)
@click.option("--samples-per-cluster", default=50, type=int)
@click.option("--center-scale", default=4.0, type=float)
@click.option("--noise-sigma", default=1.0, type=float)
@click.option("--logit-sharpness", default=1.0, type=float)
def synth(out, fmt, seed, dim, id_clusters, ood_clusters, samples_per_cluster,
          center_scale, noise_sigma, logit_sharpness):
    """Generate a seeded synthetic clustered dataset."""
    cfg = featurestore.SyntheticConfig(
        D=dim, id_cluster_count=id_clusters, ood_cluster_count=ood_clusters,
        samples_per_cluster=samples_per_cluster, cluster_center_scale=center_scale,
        noise_sigma=noise_sigma, logit_sharpness=logit_sharpness, seed=seed)
    header, records = featurestore.generate_synthetic(cfg)
    n = featurestore.write_dataset(records, header, out, fmt)
    click.echo(f"wrote {len(records)} records ({n} bytes) to {out}")


@main.command("build-bench")
@_run_dir_option
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="binary", type=click.Choice(["binary", "jsonl"]))
@click.option("--sessions", default=5, type=int, help="number of training sessions")
@click.option("--g0-classes", default=None, type=int,
              help="ood classes for G_0 (default: half)")
@click.option("--seed", default=0, type=int)
def build_bench(run_dir, dataset, fmt, sessions, g0_classes, seed):
    """Partition a dataset into session groups plus a holdout group."""
    header, records = featurestore.load_dataset(dataset, fmt)
    id_classes = set(header.id_class_set)
    ood_classes = {r.class_id for r in records} - id_classes
    if g0_classes is None:
        g0_classes = len(ood_classes) // 2
    try:
        bench = benchkit.build_benchmark(records, id_classes, ood_classes,
                                         sessions, g0_classes, seed)
    except benchkit.BenchmarkError as e:
        _fail(str(e))
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "dataset.path"), "w") as f:
        f.write(f"{os.path.abspath(dataset)}\t{fmt}")
    benchkit.save_benchmark(bench, os.path.join(run_dir, "benchmark.json"))
    manifest = benchkit.benchmark_manifest(bench)
    with open(os.path.join(run_dir, "manifest.txt"), "w") as f:
        f.write(manifest)
    click.echo(manifest, nl=False)


def _train_options(f):
    for opt in [
        click.option("--method", default=None, type=click.Choice(["iconp", "ibce"])),
        click.option("--seed", default=None, type=int),
        click.option("--config", "config_file", default=None,
                     type=click.Path(exists=True), help="flat key=value config file"),
        click.option("--batch-size", "batch_size", default=None, type=int),
        click.option("--epochs", default=None, type=int),
        click.option("--dropout-p", "dropout_p", default=None, type=float),
        click.option("--mixup", default=None, type=click.Choice(["off", "input", "manifold"])),
    ]:
        f = opt(f)
    return f


@main.command()
@_run_dir_option
@_train_options
def train(run_dir, method, seed, config_file, **overrides):
    """Run the initial offline session S_0 on G_0."""
    header, records = _load_dataset_for(run_dir)
    bench = benchkit.load_benchmark(os.path.join(run_dir, "benchmark.json"))
    cfg = _config(run_dir, method, seed, config_file, **overrides)
    try:
        state = looprunner.initial_session(bench, header, records, cfg)
    except looprunner.LoopError as e:
        _fail(str(e))
    looprunner.save_state(state, run_dir)
    click.echo(report.emit_report(state.history), nl=False)


@main.command()
@_run_dir_option
@click.option("--group", required=True, type=int)
@click.option("--annotator", default="oracle", type=click.Choice(["oracle", "ledger"]))
def session(run_dir, group, annotator):
    """Run one incremental session on group G_i."""
    state = _load_state(run_dir)
    try:
        if annotator == "oracle":
            looprunner.oracle_annotate(state, group)
        looprunner.run_session(state, group)
    except looprunner.LoopError as e:
        _fail(str(e))
    looprunner.save_state(state, run_dir)
    click.echo(report.emit_report(state.history), nl=False)


@main.command()
@_run_dir_option
@click.option("--sessions", default=None, type=int)
@click.option("--annotator", default="oracle", type=click.Choice(["oracle"]))
@_train_options
def loop(run_dir, sessions, annotator, method, seed, config_file, **overrides):
    """Full protocol: S_0 then oracle-annotated incremental sessions."""
    header, records = _load_dataset_for(run_dir)
    bench = benchkit.load_benchmark(os.path.join(run_dir, "benchmark.json"))
    cfg = _config(run_dir, method, seed, config_file, **overrides)
    try:
        state = looprunner.run_loop(bench, header, records, cfg,
                                    sessions=sessions, annotator=annotator)
    except looprunner.LoopError as e:
        _fail(str(e))
    looprunner.save_state(state, run_dir)
    click.echo(report.emit_report(state.history), nl=False)


@main.command("eval")
@_run_dir_option
@click.option("--group", default="holdout", type=click.Choice(["holdout", "seen"]))
@click.option("--method", default=None,
              help="model method (default) or msp|maxlogit|energy")
def eval_cmd(run_dir, group, method):
    """Evaluate the current checkpoint (or a logit baseline) on one group."""
    state = _load_state(run_dir)
    recs = (state.group_records(state.benchmark.holdout) if group == "holdout"
            else [state.records[i] for i in state.replay])
    method = method or state.method
    if method in (evalkit.MSP, evalkit.MAXLOGIT, evalkit.ENERGY):
        ss = evalkit.baseline_score_set(recs, method, group=group)
    else:
        ss = evalkit.model_score(state.model, recs, group=group, method=method)
    rep = evalkit.evaluate(ss)
    click.echo(f"method={rep.method} group={rep.group} "
               f"fpr95={rep.fpr_at_95:.4f} auroc={rep.auroc:.4f} "
               f"n_id={rep.n_id} n_ood={rep.n_ood}")


@main.command("export-scores")
@_run_dir_option
@click.option("--group", default="holdout", type=click.Choice(["holdout", "seen"]))
@click.option("--method", default=None)
@click.option("--out", required=True, type=click.Path())
def export_scores(run_dir, group, method, out):
    """Export a (score, is_id) table plus histogram block for one group."""
    state = _load_state(run_dir)
    recs = (state.group_records(state.benchmark.holdout) if group == "holdout"
            else [state.records[i] for i in state.replay])
    method = method or state.method
    if method in (evalkit.MSP, evalkit.MAXLOGIT, evalkit.ENERGY):
        ss = evalkit.baseline_score_set(recs, method, group=group)
    else:
        ss = evalkit.model_score(state.model, recs, group=group, method=method)
    evalkit.export_scores(ss, out)
    click.echo(f"wrote scores to {out}")


@main.command("report")
@_run_dir_option
def report_cmd(run_dir):
    """Render the dual-evaluation table and figures for a run."""
    state = _load_state(run_dir)
    if not state.history:
        _fail("metric history is empty")
    click.echo(report.render_report(state, run_dir), nl=False)


@main.command()
@_run_dir_option
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--console-dir", default=None, type=click.Path(),
              help="static console assets (default: ./frontend/dist if present)")
def serve(run_dir, port, host, console_dir):
    """Serve the feedback API and the annotation console."""
    import uvicorn

    from .api import create_app
    state = _load_state(run_dir)
    if console_dir is None:
        cand = os.path.join(os.getcwd(), "frontend", "dist")
        console_dir = cand if os.path.isdir(cand) else None
    app = create_app(state, run_dir=run_dir, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()

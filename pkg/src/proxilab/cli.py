"""proxilab command-line interface."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click
import numpy as np

from . import atl, data, nnmodel, simlab, socialforce, socnav, stats


@click.group()
@click.option("--verbose", is_flag=True, help="Enable info-level logging.")
def main(verbose):
    """Personalized proxemics modeling toolkit."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_ratios(text: str):
    parts = tuple(float(p) for p in text.split(","))
    if len(parts) != 3:
        raise click.BadParameter("ratios must be three comma-separated numbers")
    return parts


@main.command()
@click.option("--socnav", "socnav_path", type=click.Path(exists=True), default=None,
              help="SocNav1-style dataset; defaults to the bundled fixture.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True,
              help="train,validation,test ratios; also writes per-split files.")
def ingest(socnav_path, out_path, seed, ratios):
    """Parse, filter, and label a dataset into canonical JSONL."""
    path = Path(socnav_path) if socnav_path else data.socnav_fixture_path()
    scenarios = socnav.parse_dataset(path)
    single = socnav.filter_single_human(scenarios)
    examples = socnav.label_scenarios(single)
    click.echo(f"parsed {len(scenarios)} scenarios "
               f"(SocNav1 reference: {socnav.SOCNAV1_TOTAL_SCENARIOS})")
    click.echo(f"single-human pool {len(single)}, labeled {len(examples)} "
               f"(SocNav1 reference: {socnav.SOCNAV1_FILTERED_REFERENCE})")
    out = Path(out_path)
    socnav.write_examples(out, examples)
    split = socnav.split(examples, _parse_ratios(ratios), seed=seed)
    for name, part in (("train", split.train), ("val", split.validation), ("test", split.test)):
        part_path = out.with_suffix(f".{name}.jsonl")
        socnav.write_examples(part_path, part)
        click.echo(f"{name}: {len(part)} -> {part_path}")
    click.echo(f"all: {len(examples)} -> {out}")


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=None, help="Override the default epoch count.")
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True,
              help="Internal train/val/test split of --data.")
def train(data_path, seed, out_path, epochs, ratios):
    """Train the discomfort model and write it as JSON."""
    examples = socnav.read_examples(data_path)
    split = socnav.split(examples, _parse_ratios(ratios), seed=seed)
    kwargs = {"seed": seed}
    if epochs is not None:
        kwargs["epochs"] = epochs
    net, history = nnmodel.train(split, train_cfg=nnmodel.TrainConfig(**kwargs))
    nnmodel.save_model(net, out_path)
    click.echo(f"trained on {len(split.train)} examples, "
               f"best epoch {history['best_epoch']}, model -> {out_path}")
    if split.validation:
        click.echo(f"validation MAE: {nnmodel.evaluate_mae(net, split.validation):.3f} "
                   f"(unsmoothed {nnmodel.evaluate_mae(net, split.validation, smooth=False):.3f})")


@main.command("eval")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--no-smooth", is_flag=True, help="Skip prediction smoothing.")
def eval_cmd(model_path, data_path, no_smooth):
    """Print model MAE on a labeled JSONL dataset."""
    net = nnmodel.load_model(model_path)
    examples = socnav.read_examples(data_path)
    mae = nnmodel.evaluate_mae(net, examples, smooth=not no_smooth)
    click.echo(f"MAE: {mae:.4f} ({'unsmoothed' if no_smooth else 'smoothed'}, n={len(examples)})")


@main.command("fit-sf")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--generations", type=int, default=100, show_default=True)
@click.option("--population", type=int, default=50, show_default=True)
def fit_sf(data_path, seed, out_path, generations, population):
    """Fit the social-force baseline with the genetic algorithm."""
    examples = socnav.read_examples(data_path)
    cfg = socialforce.GAConfig(population_size=population, generations=generations, seed=seed)
    params, history = socialforce.ga_fit(examples, cfg=cfg)
    socialforce.save_params(params, out_path)
    click.echo(f"fitted {params} -> {out_path}")
    click.echo(f"training MAE: {history[-1]:.4f} (start {history[0]:.4f})")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--train-domain", "train_domain_path", type=click.Path(exists=True), default=None,
              help="Labeled JSONL for the sampler's training-domain class; "
                   "defaults to the bundled fixture's validation split.")
@click.option("--users", type=int, default=20, show_default=True)
@click.option("--preset", type=click.Choice(simlab.PRESETS), default="angled", show_default=True)
@click.option("--seed", type=int, default=11, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def simulate(model_path, train_domain_path, users, preset, seed, out_path):
    """Run the synthetic-user personalization study and write the report."""
    net = nnmodel.load_model(model_path)
    training_sample = _training_domain(train_domain_path)
    cfg = simlab.StudyConfig(n_users=users, preset=preset, seed=seed)
    report = simlab.run_study1(net, training_sample, cfg)
    Path(out_path).write_text(json.dumps(report.to_dict(), indent=2))
    a = report.aggregates
    click.echo(f"not fine-tuned MAE {a['base_mae_mean']:.2f}, "
               f"ATL {a['atl_mae_mean']:.2f}, RS {a['rs_mae_mean']:.2f} "
               f"(reduction {100 * a['relative_reduction']:.1f}%)")
    click.echo(f"report -> {out_path}")


@main.command()
@click.option("--users", type=int, default=20, show_default=True)
@click.option("--preset", type=click.Choice(simlab.PRESETS), default="shifted", show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def replica(users, preset, seed, out_path):
    """Run the virtual-vs-physical stopping-distance analysis pipeline."""
    cfg = simlab.ReplicaConfig(n_users=users, preset=preset, seed=seed)
    report = simlab.run_ar_physical_replica(cfg)
    Path(out_path).write_text(json.dumps(report, indent=2))
    click.echo(f"outlier recall {report['outlier_recall']:.2f}, "
               f"regression MAE {report['gpr_mae']:.3f} vs naive {report['naive_mae']:.3f}")
    click.echo(f"report -> {out_path}")


def _training_domain(path):
    if path is not None:
        return socnav.read_examples(path)
    scenarios = socnav.parse_dataset(data.socnav_fixture_path())
    examples = socnav.label_scenarios(socnav.filter_single_human(scenarios))
    return socnav.split(examples, (0.8, 0.1, 0.1), seed=0).validation


@main.command()
@click.option("--session-dir", type=click.Path(exists=True), required=True)
@click.option("--report", "report_path", type=click.Path(), required=True)
@click.option("--bandwidth", type=float, default=1.0, show_default=True)
def analyze(session_dir, report_path, bandwidth):
    """Analyze exported session logs: outlier masks, per-angle stopping-distance
    modes, a stopping-distance-vs-angle regression, and fine-tune test rows."""
    sessions = _load_session_stops(Path(session_dir))
    if not sessions:
        raise click.ClickException(f"no session-*.jsonl files in {session_dir}")

    per_session = []
    pooled = []
    for info in sessions:
        stops = info["stops"]
        entry = {
            "session_id": info["session_id"],
            "strategy": info["strategy"],
            "n_stops": len(stops),
            "fine_tune": info["fine_tune"],
        }
        arr = (np.array([(s["angle"], s["stop_distance"]) for s in stops])
               if stops else np.empty((0, 2)))
        if len(stops) >= 9:  # below one full protocol fan the scores just straddle 0.5
            standardized = (arr - arr.mean(axis=0)) / np.maximum(arr.std(axis=0), 1e-9)
            scores, inliers = stats.isolation_forest(
                standardized, stats.IsolationForestConfig(seed=0))
            entry["outlier_mask"] = [bool(not v) for v in inliers]
            kept = arr[inliers]
        else:
            entry["outlier_mask"] = [False] * len(stops)
            kept = arr
        modes = {}
        grid = np.arange(0.05, 2.51, 0.01)
        for angle in sorted(set(kept[:, 0])) if kept.size else []:
            samples = kept[kept[:, 0] == angle][:, 1]
            model = stats.KdeModel(samples, bandwidth=bandwidth)
            modes[f"{angle:.6f}"] = stats.kde_mode(model, grid)
        entry["kde_modes"] = modes
        per_session.append(entry)
        pooled.extend(kept.tolist())

    regression = None
    if len(pooled) >= 3:
        pooled_arr = np.array(pooled)
        gpr = stats.gpr_fit(pooled_arr[:, 0], pooled_arr[:, 1],
                            stats.GprConfig(normalize_y=True, noise_variance=1e-2))
        pred, _ = stats.gpr_predict(gpr, pooled_arr[:, 0])
        protocol_angles = np.linspace(-np.pi / 2, np.pi / 2, 9)
        curve, _ = stats.gpr_predict(gpr, protocol_angles)
        regression = {
            "fit_mae": float(np.mean(np.abs(pred - pooled_arr[:, 1]))),
            "angles": protocol_angles.tolist(),
            "estimated_stop_distance": curve.tolist(),
        }

    matrix = _fine_tune_matrix(sessions)
    report = {
        "sessions": per_session,
        "stop_distance_regression": regression,
        "test_matrix": matrix,
    }
    Path(report_path).write_text(json.dumps(report, indent=2))
    click.echo(f"analyzed {len(sessions)} sessions -> {report_path}")


def _load_session_stops(session_dir: Path):
    sessions = []
    for path in sorted(session_dir.glob("session-*.jsonl")):
        events = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        if not events:
            continue
        created = events[0]["data"]
        angles = {}
        stops = []
        fine_tune = None
        for ev in events:
            if ev["event"] == "approach_started":
                angles[ev["data"]["approach_id"]] = ev["data"]["angle"]
            elif ev["event"] == "approach_stopped":
                stops.append({
                    "approach_id": ev["data"]["approach_id"],
                    "angle": angles.get(ev["data"]["approach_id"]),
                    "stop_distance": ev["data"]["stop_distance"],
                })
            elif ev["event"] == "finetuned":
                fine_tune = {"pre_mae": ev["data"]["pre_mae"], "post_mae": ev["data"]["post_mae"]}
        sessions.append({
            "session_id": created.get("session_id", path.stem.removeprefix("session-")),
            "strategy": created.get("strategy"),
            "stops": stops,
            "fine_tune": fine_tune,
        })
    return sessions


def _fine_tune_matrix(sessions):
    tuned = [s for s in sessions if s["fine_tune"]]
    rows = []
    if len(tuned) >= 2:
        pre = [s["fine_tune"]["pre_mae"] for s in tuned]
        post = [s["fine_tune"]["post_mae"] for s in tuned]
        result = stats.paired_t_lower(post, pre)
        rows.append({
            "a": "fine-tuned", "b": "not-fine-tuned",
            "mean_a": float(np.mean(post)), "mean_b": float(np.mean(pre)),
            "p_value": result.p_value, "df": result.df, "t": result.statistic,
        })
    for strategy in ("atl", "random"):
        subset = [s for s in tuned if s["strategy"] == strategy]
        if len(subset) >= 2:
            pre = [s["fine_tune"]["pre_mae"] for s in subset]
            post = [s["fine_tune"]["post_mae"] for s in subset]
            result = stats.paired_t_lower(post, pre)
            rows.append({
                "a": f"{strategy} fine-tuned", "b": f"{strategy} not-fine-tuned",
                "mean_a": float(np.mean(post)), "mean_b": float(np.mean(pre)),
                "p_value": result.p_value, "df": result.df, "t": result.statistic,
            })
    return rows


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--dialogue", "dialogue_path", type=click.Path(exists=True), default=None,
              help="Dialogue JSON; defaults to the bundled file.")
@click.option("--store", "store_dir", type=click.Path(), required=True)
@click.option("--train-domain", "train_domain_path", type=click.Path(exists=True), default=None)
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None,
              help="Optional directory of web UI assets served at /.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(model_path, dialogue_path, store_dir, train_domain_path, static_dir, host, port):
    """Run the interactive session service."""
    import uvicorn

    from .service import create_app

    net = nnmodel.load_model(model_path)
    dialogue = json.loads(Path(dialogue_path or data.dialogue_path()).read_text())
    training_sample = _training_domain(train_domain_path)
    app = create_app(net, dialogue, store_dir, training_sample=training_sample,
                     static_dir=static_dir)
    click.echo(f"serving on http://{host}:{port} (store: {store_dir})")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()

"""Command-line entry point: full pipeline, single stages, and evaluations.

The pipeline is a composition of five stage functions, each reading and
writing plain files in a work directory:

    records/<id>.json         normalized home records      (ingest)
    descriptions/<id>.json    vision-model texts           (describe)
    features/<id>.geojson     generated building features  (generate)
    simulations/<id>.json     simulation results           (simulate)
    labels.jsonl (+ .errors)  labeled dataset              (label)

``pipeline`` runs the same functions back to back, so running stages
individually produces byte-identical labels. Every full run writes a
``manifest.json`` recording the config hash, backend identities, label
extremes, timings, and backend call counts.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

from . import evalharness, genjson, label as label_mod, simulate, vision
from .config import (
    PipelineConfig,
    build_embed_backend,
    build_labeler,
    build_text_backend,
    build_vision_backend,
    config_hash,
    load_config,
)
from .domain import BuildingFeature, HomeRecord, ImageDescription, SimulationResult
from .errors import ConfigError, GenerationError, InputError, PipelineError
from .ingest import load_home_records


def _write_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _require_dir(path: Path, what: str) -> Path:
    if not path.is_dir():
        raise InputError(f"missing upstream {what}: {path}")
    return path


def _map_parallel(fn: Callable, items: Sequence, parallelism: int) -> list:
    """Order-preserving parallel map; results are positional, so output
    never depends on scheduling."""
    if parallelism <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Stages


def stage_ingest(dataset_dir: Path, out_dir: Path) -> dict[str, Any]:
    """Validate and normalize the raw dataset into records/."""
    records, issues = load_home_records(dataset_dir)
    records_dir = out_dir / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        # image references leave their dataset directory behind here, so
        # they must be absolute to survive being read from records/
        if record.photo_path is not None or record.floorplan_path is not None:
            record = dataclasses.replace(
                record,
                photo_path=record.photo_path.resolve() if record.photo_path else None,
                floorplan_path=record.floorplan_path.resolve() if record.floorplan_path else None,
            )
        _write_json(records_dir / f"{record.id}.json", record.to_dict(base_dir=records_dir))
    _write_json(
        out_dir / "ingest_issues.json",
        [{"source": issue.source, "message": issue.message} for issue in issues],
    )
    return {"records": len(records), "issues": len(issues)}


def _load_records(work_in: Path) -> list[HomeRecord]:
    records_dir = _require_dir(work_in / "records", "records directory")
    records, issues = load_home_records(records_dir)
    for issue in issues:
        print(f"warning: {issue.source}: {issue.message}", file=sys.stderr)
    return records


def stage_describe(
    work_in: Path,
    out_dir: Path,
    config: PipelineConfig,
    vision_backend=None,
) -> dict[str, Any]:
    """Produce descriptions/<id>.json for every home that has an image."""
    records = _load_records(work_in)
    backend = vision_backend if vision_backend is not None else build_vision_backend(config.vision)
    desc_dir = out_dir / "descriptions"
    desc_dir.mkdir(parents=True, exist_ok=True)

    def one(record: HomeRecord) -> tuple[str, str]:
        if record.photo_path is None and record.floorplan_path is None:
            return record.id, "metadata-only"
        try:
            desc = vision.describe_home(backend, record)
        except PipelineError as exc:
            return record.id, f"failed: {exc}"
        _write_json(desc_dir / f"{record.id}.json", desc.to_dict())
        return record.id, "described"

    outcomes = _map_parallel(one, records, config.parallelism)
    meta = {home_id: status for home_id, status in outcomes}
    _write_json(out_dir / "describe_meta.json", meta)
    described = sum(1 for s in meta.values() if s == "described")
    return {"records": len(records), "described": described}


def stage_generate(
    work_in: Path,
    out_dir: Path,
    config: PipelineConfig,
    text_backend=None,
) -> dict[str, Any]:
    """Generate features/<id>.geojson from records plus any descriptions."""
    records = _load_records(work_in)
    backend = text_backend if text_backend is not None else build_text_backend(config.text)
    desc_dir = work_in / "descriptions"
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)

    def one(record: HomeRecord) -> tuple[str, dict[str, Any]]:
        desc = None
        desc_path = desc_dir / f"{record.id}.json"
        if desc_path.is_file():
            desc = ImageDescription.from_dict(_read_json(desc_path))
        prompt = genjson.build_generation_prompt(record, desc)
        stories = float(record.attribute("number_of_stories") or 1.0)
        try:
            outcome = genjson.generate_feature(
                backend,
                prompt,
                max_retries=config.generation_retries,
                stories=stories,
                temperature=config.text.temperature,
                max_tokens=config.text.max_tokens,
            )
        except GenerationError as exc:
            return record.id, {"error": str(exc), "violations": list(exc.violations)}
        _write_json(features_dir / f"{record.id}.geojson", outcome.feature.to_geojson())
        return record.id, {"attempts": outcome.attempts, "warnings": list(outcome.warnings)}

    outcomes = _map_parallel(one, records, config.parallelism)
    meta = {home_id: info for home_id, info in outcomes}
    _write_json(out_dir / "generate_meta.json", meta)
    generated = sum(1 for info in meta.values() if "error" not in info)
    return {"records": len(records), "features": generated}


def _feature_ids(features_dir: Path) -> list[str]:
    return sorted(p.stem for p in features_dir.glob("*.geojson"))


def stage_simulate(work_in: Path, out_dir: Path, config: PipelineConfig) -> dict[str, Any]:
    """Simulate every feature into simulations/<id>.json."""
    features_dir = _require_dir(work_in / "features", "features directory")
    if config.engine == "external" and (not config.engine_home or not config.weather):
        raise ConfigError("external engine requires engine_home and weather")
    sims_dir = out_dir / "simulations"
    sims_dir.mkdir(parents=True, exist_ok=True)
    climate = simulate.Climate(hdd=config.climate.hdd, cdd=config.climate.cdd)
    records_dir = work_in / "records"

    def one(home_id: str) -> tuple[str, str]:
        try:
            feature = BuildingFeature.from_geojson(_read_json(features_dir / f"{home_id}.geojson"))
            stories = None
            record_path = records_dir / f"{home_id}.json"
            if record_path.is_file():
                doc = _read_json(record_path)
                raw = doc.get("number_of_stories")
                if raw:
                    stories = float(raw)
            if config.engine == "external":
                idf = simulate.render_idf(feature)
                result = simulate.run_external(
                    idf,
                    weather=config.weather,
                    engine_home=config.engine_home,
                    scratch=out_dir / "engine_runs" / home_id,
                )
            else:
                result = simulate.run_surrogate(feature, climate, stories=stories)
        except PipelineError as exc:
            return home_id, f"failed: {exc}"
        _write_json(sims_dir / f"{home_id}.json", result.to_dict())
        return home_id, "simulated"

    outcomes = _map_parallel(one, _feature_ids(features_dir), config.parallelism)
    meta = {home_id: status for home_id, status in outcomes}
    _write_json(out_dir / "simulate_meta.json", meta)
    simulated = sum(1 for s in meta.values() if s == "simulated")
    return {"features": len(meta), "simulated": simulated}


def stage_label(
    work_in: Path,
    out_dir: Path,
    config: PipelineConfig,
    text_backend=None,
) -> dict[str, Any]:
    """Label every simulated home into labels.jsonl (+ errors sidecar)."""
    features_dir = _require_dir(work_in / "features", "features directory")
    sims_dir = _require_dir(work_in / "simulations", "simulations directory")
    homes = []
    for home_id in _feature_ids(features_dir):
        sim_path = sims_dir / f"{home_id}.json"
        if not sim_path.is_file():
            continue
        feature = BuildingFeature.from_geojson(_read_json(features_dir / f"{home_id}.geojson"))
        sim = SimulationResult.from_dict(_read_json(sim_path))
        homes.append((home_id, feature.inspection_note, sim))
    backend = text_backend if text_backend is not None else build_text_backend(config.text)
    labeler = build_labeler(config.labeler, backend)
    if homes:
        run = label_mod.label_dataset(homes, labeler)
    else:  # empty upstream is a zero-row run, not a layout error
        run = label_mod.LabelRun(rows=(), errors=(), extremes={})
    out_dir.mkdir(parents=True, exist_ok=True)
    labels_path = out_dir / "labels.jsonl"
    label_mod.write_jsonl(run.rows, labels_path)
    label_mod.write_jsonl(run.errors, label_mod.errors_sidecar_path(labels_path))
    _write_json(
        out_dir / "label_meta.json",
        {
            "extremes": {k: dict(v) for k, v in run.extremes.items()},
            "eta_weight": labeler.eta_weight,
            "lambda_weight": labeler.lambda_weight,
            "normalized_mu": labeler.normalized_mu,
        },
    )
    return {"homes": len(homes), "labeled": len(run.rows), "errors": len(run.errors)}


STAGES = ("ingest", "describe", "generate", "simulate", "label")


def stage_run(stage: str, in_path: Path | str, out_path: Path | str, config: PipelineConfig | None = None) -> int:
    """Run exactly one stage; returns a process exit code."""
    config = config if config is not None else PipelineConfig()
    in_path, out_path = Path(in_path), Path(out_path)
    try:
        if stage == "ingest":
            counts = stage_ingest(in_path, out_path)
        elif stage == "describe":
            counts = stage_describe(in_path, out_path, config)
        elif stage == "generate":
            counts = stage_generate(in_path, out_path, config)
        elif stage == "simulate":
            counts = stage_simulate(in_path, out_path, config)
        elif stage == "label":
            counts = stage_label(in_path, out_path, config)
        else:
            raise InputError(f"unknown stage {stage!r}")
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{stage}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    if stage == "label" and counts.get("labeled", 0) == 0:
        return 1
    return 0


# ---------------------------------------------------------------------------
# Pipeline


def pipeline_run(config: PipelineConfig, dataset: Path | str, out: Path | str) -> int:
    """The five stages back to back, plus a run manifest.

    Exit 0 when at least one home was labeled, 1 when none were, 2 for
    invalid configuration or input layout.
    """
    dataset, out = Path(dataset), Path(out)
    out.mkdir(parents=True, exist_ok=True)
    vision_backend = build_vision_backend(config.vision)
    text_backend = build_text_backend(config.text)

    counts: dict[str, Any] = {}
    timings: dict[str, float] = {}
    started = time.time()
    try:
        for name, runner in (
            ("ingest", lambda: stage_ingest(dataset, out)),
            ("describe", lambda: stage_describe(out, out, config, vision_backend=vision_backend)),
            ("generate", lambda: stage_generate(out, out, config, text_backend=text_backend)),
            ("simulate", lambda: stage_simulate(out, out, config)),
            ("label", lambda: stage_label(out, out, config, text_backend=text_backend)),
        ):
            t0 = time.perf_counter()
            counts[name] = runner()
            timings[name] = round(time.perf_counter() - t0, 6)
            print(f"{name}: " + ", ".join(f"{k}={v}" for k, v in counts[name].items()))
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    labeled = counts["label"]["labeled"]
    label_meta = _read_json(out / "label_meta.json")
    manifest = {
        "config_hash": config_hash(config),
        "engine": config.engine,
        "backends": {
            "vision": vision_backend.model_id,
            "text": text_backend.model_id,
            "embed": config.embed.model_id or config.embed.kind,
        },
        "backend_calls": {
            "vision": getattr(vision_backend, "calls", None),
            "text": getattr(text_backend, "calls", None),
        },
        "counts": counts,
        "extremes": label_meta["extremes"],
        "timings_s": timings,
        "started_at": started,
        "finished_at": time.time(),
    }
    _write_json(out / "manifest.json", manifest)
    return 0 if labeled > 0 else 1


# ---------------------------------------------------------------------------
# Evaluation commands


def eval_occlusion(args: argparse.Namespace, config: PipelineConfig) -> int:
    image_path = Path(args.image)
    if not image_path.is_file():
        print(f"error: image not found: {image_path}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    vision_backend = build_vision_backend(config.vision)
    embed_backend = build_embed_backend(config.embed)
    report = evalharness.occlusion_run(
        image_path.read_bytes(),
        args.prompt,
        vision_backend,
        embed_backend,
        n=args.cells,
        image_id=image_path.stem,
    )
    if args.mask:
        mask = evalharness.load_region_mask(args.mask, report.grid_rows, report.grid_cols)
        report = evalharness.apply_region_mask(report, mask)
        print(f"rmd={report.rmd:.6f} nrmd={report.nrmd:.6f}")
    evalharness.render_heatmap(report, out_dir / "heatmap.png", out_dir / "distances.csv")
    _write_json(out_dir / "report.json", report.to_dict())
    print(f"occlusion: cells={args.cells} max_distance={max(report.distances):.6f} out={out_dir}")
    return 0


def eval_ablation(args: argparse.Namespace, config: PipelineConfig) -> int:
    labeler = build_labeler(config.labeler, build_text_backend(config.text))
    if args.mode == "text":
        rows = evalharness.ablation_text(labeler, trials=args.trials)
    elif args.mode == "sim":
        rows = evalharness.ablation_sim(labeler, variable=args.variable, trials=args.trials)
    else:
        rows = evalharness.combined_variation_for_variable(labeler, args.variable, trials=args.trials)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"ablation_{args.mode}.csv"
    evalharness.write_ablation_csv(rows, csv_path)
    for row in rows:
        hvac = "-" if row.hvac_mu_mean is None else f"{row.hvac_mu_mean:.4f}±{row.hvac_mu_sd:.4f}"
        ins = (
            "-"
            if row.insulation_mu_mean is None
            else f"{row.insulation_mu_mean:.4f}±{row.insulation_mu_sd:.4f}"
        )
        print(f"{row.label:24s} hvac_mu={hvac:18s} insulation_mu={ins}")
    print(f"ablation: mode={args.mode} rows={len(rows)} out={csv_path}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if getattr(args, "engine", None):
        config = dataclasses.replace(config, engine=args.engine)
    if getattr(args, "engine_home", None):
        config = dataclasses.replace(config, engine_home=args.engine_home)
    if getattr(args, "weather", None):
        config = dataclasses.replace(config, weather=args.weather)
    climate = config.climate
    if getattr(args, "hdd", None) is not None:
        climate = dataclasses.replace(climate, hdd=args.hdd)
    if getattr(args, "cdd", None) is not None:
        climate = dataclasses.replace(climate, cdd=args.cdd)
    if climate is not config.climate:
        config = dataclasses.replace(config, climate=climate)
    if getattr(args, "normalized_mu", False):
        config = dataclasses.replace(
            config, labeler=dataclasses.replace(config.labeler, normalized_mu=True)
        )
    return config


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--engine", choices=("surrogate", "external"), help="simulation engine")
    parser.add_argument("--weather", help="weather file for the external engine")
    parser.add_argument("--engine-home", dest="engine_home", help="directory holding the engine binaries")
    parser.add_argument("--hdd", type=float, help="annual heating degree-days")
    parser.add_argument("--cdd", type=float, help="annual cooling degree-days")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homesynth",
        description="Synthetic building-energy dataset pipeline and evaluation harnesses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a raw dataset into a work directory")
    p.add_argument("--dataset", required=True, help="raw dataset directory")
    p.add_argument("--out", required=True, help="work directory")

    for name, help_text in (
        ("describe", "describe home images into texts"),
        ("generate", "generate building features from records + descriptions"),
        ("simulate", "simulate every generated feature"),
        ("label", "label every simulated home"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--work", required=True, help="work directory (stage input and output)")
        p.add_argument("--config", help="run configuration JSON")
        if name == "simulate":
            _add_engine_flags(p)
        if name == "label":
            p.add_argument("--normalized-mu", action="store_true", dest="normalized_mu",
                           help="rescale combined ratings into [0, 1]")

    p = sub.add_parser("pipeline", help="run all five stages")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--normalized-mu", action="store_true", dest="normalized_mu")
    _add_engine_flags(p)

    p = sub.add_parser("eval", help="evaluation harnesses")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)

    p = eval_sub.add_parser("occlusion", help="occlusion focus test on one image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", help="region mask CSV (k x k of 0/1)")
    p.add_argument("--cells", type=int, default=100)
    p.add_argument("--prompt", default=vision.DEFAULT_FACADE_PROMPT)
    p.add_argument("--out", default="occlusion_out")
    p.add_argument("--config", help="run configuration JSON")

    p = eval_sub.add_parser("ablation", help="labeler ablation tables")
    p.add_argument("--mode", required=True, choices=("text", "sim", "combined"))
    p.add_argument("--variable", default="HVACC", choices=sorted(evalharness.ABLATION_GRID))
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--out", default="ablation_out")
    p.add_argument("--config", help="run configuration JSON")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(getattr(args, "config", None))
        config = _apply_overrides(config, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "ingest":
        return stage_run("ingest", args.dataset, args.out, config)
    if args.command in ("describe", "generate", "simulate", "label"):
        return stage_run(args.command, args.work, args.work, config)
    if args.command == "pipeline":
        return pipeline_run(config, args.dataset, args.out)
    if args.command == "eval":
        if args.eval_command == "occlusion":
            return eval_occlusion(args, config)
        return eval_ablation(args, config)
    raise AssertionError(f"unhandled command {args.command}")  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())

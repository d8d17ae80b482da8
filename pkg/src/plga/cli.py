"""Command-line entry point.

Commands: demos (generate a dataset), run (train + evaluate methods),
probe (entropy table), abstract (one-off abstraction query), masks-dump
(render masks as ASCII / PPM), serve (HTTP session service).

Exit codes: 0 ok, 2 config or data error, 3 needs-human, 4 backend error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .abstraction import AbstractionError, shared_abstractor
from .catalog import CatalogError, default_catalog
from .experiment import (
    METHODS,
    DemoDataset,
    ExperimentError,
    ExperimentSpec,
    builtin_rules_path,
    builtin_scenario_ids,
    entropy_probe,
    generate_dataset,
    load_builtin_spec,
    load_spec,
    run_matrix,
)
from .gateway import (
    ConfigError,
    GatewayError,
    LmBackendConfig,
    ParseError,
)
from .preference import NeedsHumanError, NoDeltaPairError, PreferenceDistribution
from .util import stable_seed
from .world import GenerationError, WorldError, sample_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NEEDS_HUMAN = 3
EXIT_BACKEND = 4

CONFIG_KEYS = {"backend", "seeds", "methods", "out_dir"}


class TerminalHumanPort:
    """Interactive port: print the hypotheses, read one line."""

    def __init__(self, stdin=None, stdout=None):
        self.stdin = stdin or sys.stdin
        self.stdout = stdout or sys.stdout

    def ask(self, distribution: PreferenceDistribution, context: str) -> str:
        print(context, file=self.stdout)
        print(f"entropy: {distribution.entropy:.4f}", file=self.stdout)
        for i, h in enumerate(distribution.hypotheses, 1):
            print(f"  {i}. {h.text}  (p={h.probability:.3f})", file=self.stdout)
        print("Describe the preference in one line:", file=self.stdout)
        line = self.stdin.readline()
        if not line.strip():
            raise NeedsHumanError("no preference provided on stdin")
        return line.rstrip("\n")


def _load_cli_config(path: str | None) -> dict:
    if not path:
        return {}
    data = json.loads(Path(path).read_text("utf-8"))
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}; allowed: {sorted(CONFIG_KEYS)}")
    return data


def _resolve_spec(value: str) -> ExperimentSpec:
    if Path(value).is_file():
        return load_spec(value)
    return load_builtin_spec(value)


def _resolve_backend(args, config: dict) -> LmBackendConfig:
    uri = args.backend or config.get("backend")
    if not uri:
        uri = "scripted:" + builtin_rules_path()
    return LmBackendConfig.from_uri(uri)


def _parse_seeds(value: str | None, config: dict) -> list[int]:
    if value is None:
        value = config.get("seeds", "0")
    if isinstance(value, list):
        return [int(v) for v in value]
    return [int(v) for v in str(value).split(",") if v != ""]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plga", description="Preference-conditioned language-guided abstraction pipeline"
    )
    parser.add_argument("--config", help="JSON config file; flags override its values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demos", help="generate an oracle demonstration dataset")
    p.add_argument("--spec", required=True, help="scenario id or JSON path")
    p.add_argument("--seed", type=int, default=0, help="dataset seed")
    p.add_argument("--out", required=True, help="output JSON-lines file")

    p = sub.add_parser("run", help="train and evaluate one or all methods")
    p.add_argument("--spec", required=True, help="scenario id or JSON path")
    p.add_argument("--dataset", help="existing dataset file (default: regenerate per seed)")
    p.add_argument("--method", default="all", choices=(*METHODS, "all"), help="method to run")
    p.add_argument("--backend", help="backend uri: scripted:F | replay:F | live:F")
    p.add_argument("--seeds", help="comma-separated seeds (default 0)")
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--csv", help="also write the comparison CSV here")
    p.add_argument("--dump-transcripts", help="directory for per-run LM transcripts")

    p = sub.add_parser("probe", help="entropy table over scenarios")
    p.add_argument("--specs", default="all", help="comma-separated scenario ids, or 'all'")
    p.add_argument("--backend", help="backend uri")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", default="table", choices=("table", "csv"))
    p.add_argument("--out", help="optional output file")

    p = sub.add_parser("abstract", help="one-off abstraction query for debugging")
    p.add_argument("--spec", required=True, help="scenario id or JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preference", help="condition the abstraction on this preference")
    p.add_argument("--feature-present", action="store_true", help="sample a trigger-present scene")
    p.add_argument("--backend", help="backend uri")

    p = sub.add_parser("masks-dump", help="render abstraction masks as ASCII and PPM")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preference", help="preference for a conditioned mask")
    p.add_argument("--backend", help="backend uri")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("serve", help="run the elicitation session service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--backend", help="backend uri")
    p.add_argument("--state-dir", default="./plga-sessions", help="session journal directory")
    p.add_argument("--ui-dir", help="static UI assets directory")

    return parser


def cmd_demos(args, config) -> int:
    spec = _resolve_spec(args.spec)
    dataset = generate_dataset(spec, args.seed)
    Path(args.out).write_text(dataset.to_jsonl(), "utf-8")
    print(f"wrote {len(dataset.demos)} demos to {args.out}")
    return EXIT_OK


def _run_on_dataset(spec, dataset, methods, backend, human):
    from .experiment import EvalReport, MethodResult, evaluate, run_pipeline

    seed = dataset.metadata.get("seed", 0)
    results = []
    logs = []
    for method in methods:
        policy, log = run_pipeline(spec, dataset, method, backend, human)
        rate = evaluate(policy, spec, seed)
        resolutions = [log["resolution"]] if "resolution" in log else []
        results.append(
            MethodResult(
                spec_id=spec.id,
                method=method,
                per_seed={seed: rate},
                resolutions=resolutions,
                lm_exchanges=log["lm_exchanges"],
                preference_exchanges=log["preference_exchanges"],
            )
        )
        logs.append(log)
    report = EvalReport(results=results)
    report.run_logs = logs
    return report


def cmd_run(args, config) -> int:
    spec = _resolve_spec(args.spec)
    backend = _resolve_backend(args, config)
    seeds = _parse_seeds(args.seeds, config)
    methods = list(METHODS) if args.method == "all" else [args.method]

    human = TerminalHumanPort() if "plga_active" in methods else None
    if args.dataset:
        dataset = DemoDataset.from_jsonl(Path(args.dataset).read_text("utf-8"))
        report = _run_on_dataset(spec, dataset, methods, backend, human)
    else:
        report = run_matrix([spec], methods, seeds, backend, human=human)
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(payload + "\n", "utf-8")
    else:
        print(payload)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), "utf-8")
    if args.dump_transcripts:
        out_dir = Path(args.dump_transcripts)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = []
        for i, log in enumerate(getattr(report, "run_logs", [])):
            log = dict(log)
            curve = log.pop("loss_curve", None)
            if curve is not None:
                curve_csv = "epoch,loss\n" + "\n".join(
                    f"{e},{v!r}" for e, v in enumerate(curve)
                )
                (out_dir / f"curve_{i:03d}_{log['method']}.csv").write_text(
                    curve_csv + "\n", "utf-8"
                )
            lines.append(json.dumps(log, sort_keys=True))
        (out_dir / "runs.jsonl").write_text("\n".join(lines) + "\n", "utf-8")
    for r in report.results:
        print(f"{r.spec_id} {r.method}: {r.mean:.3f} +/- {r.stderr:.3f}")
    return EXIT_OK


def cmd_probe(args, config) -> int:
    if args.specs == "all":
        ids = builtin_scenario_ids()
    else:
        ids = [s for s in args.specs.split(",") if s]
    specs = [_resolve_spec(s) for s in ids]
    backend = _resolve_backend(args, config)
    rows = entropy_probe(specs, backend, seed=args.seed)
    if args.format == "csv":
        lines = ["spec_id,section,entropy,n_hypotheses"]
        lines += [
            f"{r['spec_id']},{r['section']},{r['entropy']:.6f},{r['n_hypotheses']}" for r in rows
        ]
        text = "\n".join(lines) + "\n"
    else:
        width = max(len(r["spec_id"]) for r in rows)
        lines = [f"{'scenario'.ljust(width)}  section    entropy"]
        lines += [
            f"{r['spec_id'].ljust(width)}  {r['section']:<9s}  {r['entropy']:.4f}" for r in rows
        ]
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    print(text, end="")
    return EXIT_OK


def _ascii_mask(scene, mask) -> str:
    w, h = scene.grid_dims
    by_cell = {o.cell: o for o in scene.objects}
    rows = []
    for r in range(h):
        row = []
        for c in range(w):
            if mask[r, c]:
                row.append("#")
            elif (r, c) in by_cell:
                row.append("o")
            else:
                row.append(".")
        rows.append("".join(row))
    return "\n".join(rows)


def _ppm_mask(scene, mask, catalog) -> str:
    w, h = scene.grid_dims
    by_cell = {o.cell: o for o in scene.objects}
    lines = ["P3", f"{w} {h}", "255"]
    for r in range(h):
        row = []
        for c in range(w):
            obj = by_cell.get((r, c))
            if mask[r, c] and obj is not None:
                row.extend(str(v) for v in catalog.texture_color(obj.texture))
            elif obj is not None:
                row.extend(("40", "40", "40"))
            else:
                row.extend(("230", "230", "230"))
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def cmd_abstract(args, config) -> int:
    spec = _resolve_spec(args.spec)
    backend = _resolve_backend(args, config)
    scene = sample_scene(
        spec.task_train, spec.profile, args.feature_present, stable_seed("abstract", args.seed)
    )
    result = shared_abstractor(backend).abstract(scene, spec.utterance, args.preference)
    print(f"scene: {scene.scene_id}")
    print(f"kept kinds: {sorted(result.kept_kinds)}")
    textures = "ALL" if result.kept_textures is None else sorted(result.kept_textures)
    print(f"kept textures: {textures}")
    print(f"queries: {len(result.exchanges)} fresh, {result.cache_hits} cached")
    print(_ascii_mask(scene, result.state.mask))
    return EXIT_OK


def cmd_masks_dump(args, config) -> int:
    spec = _resolve_spec(args.spec)
    backend = _resolve_backend(args, config)
    catalog = default_catalog()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = sample_scene(spec.task_train, spec.profile, True, stable_seed("masks", args.seed))
    result = shared_abstractor(backend).abstract(scene, spec.utterance, args.preference)
    tag = "plga" if args.preference else "lga"
    (out_dir / f"{spec.id}_{tag}.txt").write_text(
        _ascii_mask(scene, result.state.mask) + "\n", "utf-8"
    )
    (out_dir / f"{spec.id}_{tag}.ppm").write_text(
        _ppm_mask(scene, result.state.mask, catalog), "utf-8"
    )
    print(f"wrote {spec.id}_{tag}.txt and .ppm to {out_dir}")
    return EXIT_OK


def cmd_serve(args, config) -> int:
    import uvicorn

    from .service import create_app

    if not (0 < args.port < 65536):
        raise ConfigError(f"invalid port {args.port}")
    backend = _resolve_backend(args, config)
    app = create_app(state_dir=args.state_dir, backend=backend, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


COMMANDS = {
    "demos": cmd_demos,
    "run": cmd_run,
    "probe": cmd_probe,
    "abstract": cmd_abstract,
    "masks-dump": cmd_masks_dump,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_cli_config(args.config)
        return COMMANDS[args.command](args, config)
    except NeedsHumanError as exc:
        print(f"needs-human: {exc}", file=sys.stderr)
        return EXIT_NEEDS_HUMAN
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GatewayError, ParseError, AbstractionError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (
        ExperimentError,
        WorldError,
        GenerationError,
        CatalogError,
        NoDeltaPairError,
        FileNotFoundError,
        json.JSONDecodeError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

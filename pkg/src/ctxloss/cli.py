"""Batch CLI: file-driven pipeline with JSON artifacts and CSV/SVG exports.

Subcommands chain through an artifact directory so a loss map fitted once
can be reweighted by any number of operating-domain files without
refitting. Every command is a pure function of its input files, flags, and
seed; reruns produce byte-identical artifacts. Exit codes: 0 success,
1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

import ctxloss
from ctxloss.data import (
    ContextSchema,
    ValidationError,
    discretize,
    encode_contexts,
    infer_schema,
    load_context_records,
    load_samples,
)
from ctxloss.render import write_heatmap_csvs, write_svg_heatmaps
from ctxloss.selection import (
    DEFAULT_ITERATIONS,
    DEFAULT_SPLIT,
    RankedFeatures,
    greedy_rank,
    select_dimensionality,
)
from ctxloss.subspace import (
    ContextSubspace,
    LossMap,
    build_subspace,
    domain_from_marginals,
    domain_from_samples,
    fit_loss_map,
    predict,
)
from ctxloss.synth import ScenarioSpec, generate


def _artifact(kind: str, **fields) -> dict:
    payload = {"kind": kind, "tool": {"name": "ctxloss", "version": ctxloss.__version__}}
    payload.update(fields)
    return payload


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"wrote {path}")
    return path


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise FileNotFoundError(f"missing artifact: {path}")
    return json.loads(path.read_text())


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path}")
    return path


def _load_table(args):
    raw = load_samples(args.input, args.loss_column)
    schema = infer_schema(raw, args.max_numeric_levels)
    return discretize(raw, schema, args.bins)


def _fmt(value) -> str:
    return repr(float(value))


def cmd_rank(args) -> int:
    table = _load_table(args)
    ranked = greedy_rank(table)
    out = Path(args.out)
    _write_json(
        out / "ranking.json",
        _artifact(
            "ranking",
            input=str(args.input),
            loss_column=args.loss_column,
            bins=args.bins,
            schema=table.schema.to_dict(),
            ranking=ranked.to_dict(),
        ),
    )
    rows = []
    for it, scores in enumerate(ranked.per_iteration_scores, start=1):
        for _, name, score in scores:
            rows.append([it, name, _fmt(score)])
    _write_csv(out / "rank_scores.csv", ["iteration", "feature", "score"], rows)
    return 0


def cmd_select_k(args) -> int:
    table = _load_table(args)
    ranked = greedy_rank(table)
    report = select_dimensionality(
        table,
        ranked,
        k_max=args.k_max,
        iterations=args.iterations,
        split=args.split,
        seed=args.seed,
    )
    out = Path(args.out)
    _write_json(
        out / "dimensionality.json",
        _artifact(
            "dimensionality",
            input=str(args.input),
            loss_column=args.loss_column,
            bins=args.bins,
            schema=table.schema.to_dict(),
            ranking=ranked.to_dict(),
            report=report.to_dict(),
        ),
    )
    rows = [[k + 1, _fmt(e)] for k, e in enumerate(report.epsilon_tilde)]
    _write_csv(out / "epsilon_curve.csv", ["k", "mean_error"], rows)
    if report.context_uninformative:
        print("note: error curve is flat or rising; context uninformative about the loss")
    return 0


def _subspace_indices(args, table, out: Path):
    if args.features:
        names = [n.strip() for n in args.features.split(",") if n.strip()]
        if not names:
            raise ValidationError("--features given but empty")
        return [table.schema.index_of(n) for n in names]
    ranking_path = out / "ranking.json"
    if ranking_path.exists():
        ranked = RankedFeatures.from_dict(_read_json(ranking_path)["ranking"])
    else:
        ranked = greedy_rank(table)
    if args.k is not None:
        k = args.k
    else:
        report = _read_json(out / "dimensionality.json")
        k = report["report"]["chosen_k"]
    if not 1 <= k <= len(ranked.order):
        raise ValidationError(f"k must be in [1, {len(ranked.order)}]")
    return list(ranked.order[:k])


def cmd_fit(args) -> int:
    table = _load_table(args)
    out = Path(args.out)
    indices = _subspace_indices(args, table, out)
    sub = build_subspace(table.schema, indices)
    loss_map = fit_loss_map(table, sub)
    _write_json(
        out / "loss_map.json",
        _artifact(
            "loss_map",
            input=str(args.input),
            loss_column=args.loss_column,
            bins=args.bins,
            n_rows=table.n,
            schema=table.schema.to_dict(),
            feature_indices=indices,
            loss_map=loss_map.to_dict(),
        ),
    )
    for path in write_heatmap_csvs(loss_map.expected_loss, sub, out, "loss_map_heatmap"):
        print(f"wrote {path}")
    return 0


def _parse_domain_arg(value: str):
    if "=" not in value:
        raise ValidationError(f"--domain expects name=path, got {value!r}")
    name, path = value.split("=", 1)
    if not name or not path:
        raise ValidationError(f"--domain expects name=path, got {value!r}")
    return name, Path(path)


def _domain_from_file(name: str, path: Path, sub: ContextSubspace):
    if path.suffix.lower() == ".csv":
        sub_schema = ContextSchema(sub.features)
        raw = load_context_records(path, sub_schema)
        contexts = encode_contexts(raw, sub_schema)
        return domain_from_samples(contexts, sub, label=name)
    if path.suffix.lower() == ".json":
        if not path.exists():
            raise FileNotFoundError(f"domain file not found: {path}")
        marginals = json.loads(path.read_text())
        marginals.pop("label", None)
        return domain_from_marginals(marginals, sub, label=name)
    raise ValidationError(f"domain file {path} must be .csv (samples) or .json (marginals)")


def cmd_predict(args) -> int:
    out = Path(args.out)
    loss_map_path = Path(args.loss_map) if args.loss_map else out / "loss_map.json"
    payload = _read_json(loss_map_path)
    loss_map = LossMap.from_dict(payload["loss_map"])
    sub = loss_map.subspace
    for value in args.domain:
        name, path = _parse_domain_arg(value)
        domain = _domain_from_file(name, path, sub)
        report = predict(loss_map, domain)
        _write_json(
            out / f"prediction_{name}.json",
            _artifact(
                "prediction",
                domain=name,
                domain_file=str(path),
                subspace=sub.to_dict(),
                domain_mass=[float(v) for v in domain.mass],
                report=report.to_dict(),
            ),
        )
        for p in write_heatmap_csvs(domain.mass, sub, out, f"domain_{name}_heatmap"):
            print(f"wrote {p}")
    return 0


def cmd_synth(args) -> int:
    spec = ScenarioSpec.from_json(args.spec)
    gen = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    test_rows = []
    for i in range(gen.test.n):
        row = [_fmt(gen.test.losses[i])]
        for col in gen.test.columns:
            v = col[i]
            row.append(_fmt(v) if isinstance(v, (float, np.floating)) else str(v))
        test_rows.append(row)
    _write_csv(out / "test.csv", ["loss", *gen.test.feature_names], test_rows)
    for name, raw in gen.domains.items():
        rows = []
        for i in range(raw.n):
            row = []
            for col in raw.columns:
                v = col[i]
                row.append(_fmt(v) if isinstance(v, (float, np.floating)) else str(v))
            rows.append(row)
        _write_csv(out / f"domain_{name}.csv", list(raw.feature_names), rows)
    _write_json(
        out / "truth.json",
        _artifact("truth", name=spec.name, seed=spec.seed, truth=gen.truth.to_dict()),
    )
    return 0


def cmd_report(args) -> int:
    art = Path(args.artifacts)
    ranking = _read_json(art / "ranking.json")
    dimensionality = _read_json(art / "dimensionality.json")
    loss_map_payload = _read_json(art / "loss_map.json")
    loss_map = LossMap.from_dict(loss_map_payload["loss_map"])
    predictions = [
        _read_json(p) for p in sorted(art.glob("prediction_*.json"))
    ]
    lines = ["# ctxloss report", ""]
    lines += ["## Feature ranking", "", "| rank | feature | score (nats) |", "| --- | --- | --- |"]
    ranked = ranking["ranking"]
    for i, (name, score) in enumerate(zip(ranked["feature_names"], ranked["scores"]), 1):
        lines.append(f"| {i} | {name} | {score:.6f} |")
    report = dimensionality["report"]
    lines += ["", "## Dimensionality selection", "", "| K | mean prediction error |", "| --- | --- |"]
    for k, e in enumerate(report["epsilon_tilde"], 1):
        marker = " (chosen)" if k == report["chosen_k"] else ""
        lines.append(f"| {k} | {e:.6f}{marker} |")
    if report["context_uninformative"]:
        lines.append("")
        lines.append("Context uninformative: the error curve never improves on K=1.")
    sub = loss_map.subspace
    lines += [
        "",
        "## Loss map",
        "",
        f"- subspace: {', '.join(f.name for f in sub.features)}",
        f"- cells: {sub.cell_count}",
        f"- tested cells: {int(loss_map.tested.sum())}",
        f"- untested cells (imputed with max loss {loss_map.max_loss}): {loss_map.untested_cells}",
    ]
    lines += ["", "## Predictions", ""]
    if predictions:
        lines += [
            "| domain | predicted loss | predicted recall | untested mass |",
            "| --- | --- | --- | --- |",
        ]
        for p in predictions:
            r = p["report"]
            recall = "n/a" if r["predicted_recall"] is None else f"{r['predicted_recall']:.6f}"
            lines.append(
                f"| {p['domain']} | {r['predicted_loss']:.6f} | {recall} "
                f"| {r['untested_mass']:.6f} |"
            )
    else:
        lines.append("No prediction artifacts found.")
    out_path = Path(args.out) if args.out else art / "report.md"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {out_path}")
    if args.svg:
        for p in write_svg_heatmaps(
            loss_map.expected_loss, sub, art, "loss_map", vmax=loss_map.max_loss
        ):
            print(f"wrote {p}")
        for p in predictions:
            mass = np.asarray(p["domain_mass"], dtype=np.float64)
            for path in write_svg_heatmaps(mass, sub, art, f"domain_{p['domain']}"):
                print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxloss",
        description="Predict a fixed model's expected loss in new operating domains",
    )
    sub = parser.add_subparsers(dest="command")

    table_args = argparse.ArgumentParser(add_help=False)
    table_args.add_argument("--input", required=True, help="loss/context CSV")
    table_args.add_argument("--loss-column", required=True, help="name of the loss column")
    table_args.add_argument("--bins", type=int, default=10, help="bins for numerical features")
    table_args.add_argument(
        "--max-numeric-levels",
        type=int,
        default=10,
        help="numeric columns with more distinct values than this get binned",
    )
    out_args = argparse.ArgumentParser(add_help=False)
    out_args.add_argument("--out", required=True, help="artifact directory")

    p = sub.add_parser("rank", parents=[table_args, out_args], help="rank features by information about the loss")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("select-k", parents=[table_args, out_args], help="choose the subspace dimensionality")
    p.add_argument("--k-max", type=int, default=None, help="largest K to try (default min(J, 6))")
    p.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--split", type=float, default=DEFAULT_SPLIT)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("fit", parents=[table_args, out_args], help="fit the per-cell loss map")
    p.add_argument("--k", type=int, default=None, help="subspace size (default: chosen_k artifact)")
    p.add_argument("--features", default=None, help="comma-separated feature names (overrides ranking)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[out_args], help="predict expected loss in operating domains")
    p.add_argument("--loss-map", default=None, help="loss map artifact (default OUT/loss_map.json)")
    p.add_argument(
        "--domain",
        action="append",
        required=True,
        metavar="NAME=PATH",
        help="operating domain: samples CSV or marginals JSON (repeatable)",
    )
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", parents=[out_args], help="generate a synthetic scenario with known truth")
    p.add_argument("--spec", required=True, help="scenario spec JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="consolidate artifacts into a readable report")
    p.add_argument("--artifacts", required=True, help="directory holding the JSON artifacts")
    p.add_argument("--out", default=None, help="report path (default ARTIFACTS/report.md)")
    p.add_argument("--svg", action="store_true", help="emit SVG heatmaps next to the report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

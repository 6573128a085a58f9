"""Command line interface: run, resample, stats, validate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .backend import backend_from_env
from .config import PipelineConfig
from .manifest import STAGES, load_manifest
from .pipeline import PipelineRunner, validate_artifacts
from .resample import dedup, embed_texts, kmeans_texts, resample
from .stats import histogram_rows, report
from .storage import atomic_write_json, atomic_write_jsonl, iter_jsonl

logger = logging.getLogger(__name__)


def _parse_shard(text: str) -> tuple[int, int]:
    try:
        index, total = text.split("/")
        return int(index), int(total)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"shard must look like 0/8, got {text!r}") from exc


def _load_config(path: str | None) -> PipelineConfig:
    return PipelineConfig.from_toml(Path(path)) if path else PipelineConfig()


def _make_backend(config: PipelineConfig):
    return backend_from_env(
        dim=config.embed_dim,
        seed=config.seed,
        max_attempts=config.backend_max_attempts,
        max_in_flight=config.backend_max_in_flight,
        url=config.backend_url,
    )


def cmd_run(args) -> int:
    config = _load_config(args.config)
    entries = load_manifest(Path(args.manifest))
    runner = PipelineRunner(config, Path(args.out), _make_backend(config))
    stages = args.stages.split(",") if args.stages else list(STAGES)
    summary = runner.run(entries, stages=stages, shard=args.shard, force=args.force)
    print(json.dumps(summary.to_json_dict(), indent=2, sort_keys=True))
    # per-entry failures are reported in the summary; only systemic errors
    # (config, storage, manifest) exit nonzero, by raising before this point
    return 0


def cmd_resample(args) -> int:
    config = _load_config(args.config)
    backend = _make_backend(config)
    actions = []
    for path in sorted(Path(args.annotations).glob("*.jsonl")):
        for row in iter_jsonl(path):
            if row.get("na_action"):
                continue
            actions.append((row["action"]["brief"], (row["video_id"], row["node_id"])))
    if not actions:
        print("no actions found", file=sys.stderr)
        return 1
    table = dedup(actions)
    texts = table.texts()
    embeddings = dict(zip(texts, embed_texts(texts, backend).tolist()))
    model = kmeans_texts(embeddings, k=args.k, seed=args.seed)
    plan = resample(model, target_size=args.target, seed=args.seed)

    out = Path(args.out)
    rows = []
    for cluster, text in plan.draws:
        ref = table.groups[text].member_refs[0]
        rows.append({"canonical_text": text, "cluster": cluster, "ref": list(ref)})
    atomic_write_jsonl(out / "plan.jsonl", rows)
    atomic_write_json(
        out / "clusters.json",
        {"k": model.k, "seed": model.seed, "inertia": model.inertia, "sizes": model.sizes()},
    )
    print(f"wrote {len(rows)} draws over {model.k} clusters to {out}")
    return 0


def cmd_stats(args) -> int:
    annotations = sorted(Path(args.annotations).glob("*.jsonl"))
    trees = sorted(Path(args.trees).glob("*.json")) if args.trees else []
    result = report(annotations, trees, top_n=args.top)
    out = Path(args.out)
    atomic_write_json(out, result)
    hist_path = out.with_name(out.stem + "_histograms.csv")
    with open(hist_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["field", "kind", "value", "count"])
        writer.writerows(histogram_rows(result))
    print(f"wrote {out} and {hist_path}")
    return 0


def cmd_validate(args) -> int:
    config = _load_config(args.config)
    violations = validate_artifacts(Path(args.dir), config)
    print(json.dumps({"violations": violations, "count": len(violations)}, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="captree", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run pipeline stages over a manifest")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--config")
    p_run.add_argument("--stages", help="comma-separated subset of embed,segment,caption,aggregate")
    p_run.add_argument("--shard", type=_parse_shard, help="INDEX/TOTAL")
    p_run.add_argument("--resume", action="store_true", help="skip completed stages (default)")
    p_run.add_argument("--force", action="store_true", help="recompute even if artifacts exist")
    p_run.set_defaults(func=cmd_run)

    p_rs = sub.add_parser("resample", help="dedup, cluster and resample brief actions")
    p_rs.add_argument("--annotations", required=True)
    p_rs.add_argument("--k", type=int, required=True)
    p_rs.add_argument("--target", type=int, required=True)
    p_rs.add_argument("--seed", type=int, default=0)
    p_rs.add_argument("--out", required=True)
    p_rs.add_argument("--config")
    p_rs.set_defaults(func=cmd_resample)

    p_st = sub.add_parser("stats", help="corpus statistics report")
    p_st.add_argument("--annotations", required=True)
    p_st.add_argument("--trees")
    p_st.add_argument("--out", required=True)
    p_st.add_argument("--top", type=int, default=20)
    p_st.set_defaults(func=cmd_stats)

    p_va = sub.add_parser("validate", help="check artifact schemas and cross-references")
    p_va.add_argument("--dir", required=True)
    p_va.add_argument("--config")
    p_va.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

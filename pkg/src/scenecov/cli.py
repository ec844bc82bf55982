"""Command-line pipelines tying the modules together.

Subcommands: synth, build-graphs, match, compare, train, embed, nn, pca,
density. Every command reads one JSON run configuration, writes plain
files (JSON/CSV) under the output directory, and is byte-deterministic
under a fixed seed. Config keys can be overridden through environment
variables with the SCENECOV_ prefix (double underscore as the section
separator, e.g. SCENECOV_ENCODER__HIDDEN=64).

Exit codes: 0 success, 1 user error (with an error JSON on stderr),
2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import archetypes as arch
from . import coverage as cov
from . import embedding_analytics as emb_an
from .actor_graph import (
    ConstructionParams,
    build_scene_graphs,
    load_graphs,
    save_graphs,
)
from .embedding import (
    EncoderConfig,
    encode,
    featurize,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .embedding_analytics import EmbeddingMatrix, load_embeddings, save_embeddings
from .errors import ConfigError, SceneCovError
from .lane_map import load_map, save_map
from .scene_model import load_scenes, save_scenes
from .synth import SynthSpec, generate_synthetic

ENV_PREFIX = "SCENECOV_"


@dataclass
class RunConfig:
    out_dir: Path = Path("out")
    seed: int = 0
    jobs: int = 1
    map_path: Path | None = None
    scenes_ref: Path | None = None
    scenes_test: Path | None = None
    catalog_dir: Path | None = None
    construction: ConstructionParams = field(default_factory=ConstructionParams)
    encoder: EncoderConfig = field(default_factory=EncoderConfig.desk_profile)
    embedding_cap: int = arch.DEFAULT_EMBEDDING_CAP
    synth: dict = field(default_factory=dict)
    density: dict = field(default_factory=dict)

    def catalog(self) -> arch.ArchetypeCatalog:
        if self.catalog_dir is not None:
            return arch.load_catalog(self.catalog_dir)
        return arch.default_catalog()

    def policy(self) -> arch.MatchPolicy:
        return arch.MatchPolicy(embedding_cap=self.embedding_cap)


def _apply_env_overrides(doc: dict, env: dict) -> dict:
    """SCENECOV_SECTION__KEY=value overrides doc["section"]["key"].

    Values parse as JSON when possible, falling back to raw strings.
    """
    for key, raw in sorted(env.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = doc
        for part in path[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"cannot override {'.'.join(path)}: not a section")
        target[path[-1]] = value
    return doc


def load_run_config(path: Path | None, env: dict | None = None) -> RunConfig:
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    doc = _apply_env_overrides(doc, dict(os.environ if env is None else env))
    known = {"out_dir", "seed", "jobs", "map", "scenes_ref", "scenes_test",
             "catalog_dir", "construction", "encoder", "embedding_cap",
             "synth", "density"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}",
                          field=sorted(unknown)[0])
    config = RunConfig()
    if "out_dir" in doc:
        config.out_dir = Path(doc["out_dir"])
    if "seed" in doc:
        config.seed = int(doc["seed"])
    if "jobs" in doc:
        config.jobs = int(doc["jobs"])
    for key, attr in (("map", "map_path"), ("scenes_ref", "scenes_ref"),
                      ("scenes_test", "scenes_test"), ("catalog_dir", "catalog_dir")):
        if doc.get(key) is not None:
            setattr(config, attr, Path(doc[key]))
    try:
        if "construction" in doc:
            config.construction = ConstructionParams.from_dict(doc["construction"])
        if "encoder" in doc:
            config.encoder = EncoderConfig.from_dict(doc["encoder"])
    except (TypeError, ValueError, SceneCovError) as exc:
        raise ConfigError(str(exc)) from exc
    if "embedding_cap" in doc:
        config.embedding_cap = int(doc["embedding_cap"])
    config.synth = doc.get("synth", {})
    config.density = doc.get("density", {})
    return config


# -- output helpers ----------------------------------------------------------

def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _fmt(cell):
    if isinstance(cell, float):
        return repr(cell)
    return cell


def _artifact(config: RunConfig, name: str) -> Path:
    return config.out_dir / name


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise SceneCovError(f"missing artifact {path}; run `scenecov {producer}` first")
    return path


# -- coverage table persistence ----------------------------------------------

def save_coverage_table(table: arch.CoverageTable, path: Path) -> None:
    scenes = []
    for i, scene_id in enumerate(table.scene_ids):
        per_arch = {}
        for name in table.archetypes:
            entry: dict = {
                "hit": table.hits[i][name],
                "count": table.counts[i][name],
                "capped": table.capped[i][name],
            }
            if table.hits[i][name]:
                entry["role_speeds"] = {r: list(v)
                                        for r, v in sorted(table.role_speeds[i][name].items())}
                entry["path_lengths"] = list(table.path_lengths[i][name])
            per_arch[name] = entry
        scenes.append({
            "scene_id": scene_id,
            "n_nodes": table.n_nodes[i],
            "covered_nodes": table.covered_nodes[i],
            "archetypes": per_arch,
        })
    _write_json(path, {
        "format": "scenecov-coverage",
        "version": 1,
        "label": table.label,
        "archetypes": list(table.archetypes),
        "node_coverage": table.node_coverage_fraction(),
        "scenes": scenes,
    })


def load_coverage_table(path: Path) -> arch.CoverageTable:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneCovError(f"cannot read coverage table {path}: {exc}") from exc
    if doc.get("format") != "scenecov-coverage":
        raise SceneCovError(f"{path}: not a coverage table file")
    names = tuple(doc["archetypes"])
    hits, counts, capped, speeds, lengths = [], [], [], [], []
    scene_ids, n_nodes, covered = [], [], []
    for rec in doc["scenes"]:
        scene_ids.append(rec["scene_id"])
        n_nodes.append(int(rec["n_nodes"]))
        covered.append(int(rec["covered_nodes"]))
        row_h, row_c, row_f, row_s, row_l = {}, {}, {}, {}, {}
        for name in names:
            entry = rec["archetypes"][name]
            row_h[name] = bool(entry["hit"])
            row_c[name] = int(entry["count"])
            row_f[name] = bool(entry["capped"])
            if entry["hit"]:
                row_s[name] = {r: tuple(v) for r, v in entry["role_speeds"].items()}
                row_l[name] = tuple(entry["path_lengths"])
        hits.append(row_h)
        counts.append(row_c)
        capped.append(row_f)
        speeds.append(row_s)
        lengths.append(row_l)
    return arch.CoverageTable(
        label=doc.get("label", "REF"), scene_ids=tuple(scene_ids), archetypes=names,
        hits=hits, counts=counts, capped=capped, role_speeds=speeds,
        path_lengths=lengths, n_nodes=tuple(n_nodes), covered_nodes=tuple(covered))


# -- commands ----------------------------------------------------------------

def cmd_synth(config: RunConfig) -> None:
    """Generate the template map plus REF and TEST scene sets.

    The TEST set reuses the synth spec with seed+1; synth.n_scenes_test and
    synth.archetype_weights_test override the TEST side when present.
    """
    spec_doc = dict(config.synth)
    spec_doc.setdefault("seed", config.seed)
    n_test = spec_doc.pop("n_scenes_test", spec_doc.get("n_scenes", 50))
    weights_test = spec_doc.pop("archetype_weights_test",
                                spec_doc.get("archetype_weights"))
    spec_ref = SynthSpec.from_dict({**spec_doc, "label": "REF"})
    spec_test = SynthSpec.from_dict({
        **spec_doc, "label": "TEST", "seed": spec_doc["seed"] + 1,
        "n_scenes": n_test, "archetype_weights": weights_test,
    })
    config.out_dir.mkdir(parents=True, exist_ok=True)
    result_ref = generate_synthetic(spec_ref)
    result_test = generate_synthetic(spec_test)
    save_map(result_ref.template.descriptions, _artifact(config, "map.json"),
             map_id=result_ref.template.name)
    save_scenes(result_ref.scene_set, _artifact(config, "scenes_ref.json"))
    save_scenes(result_test.scene_set, _artifact(config, "scenes_test.json"))
    _write_csv(_artifact(config, "truth_ref.csv"), ["scene_id", "archetype"],
               result_ref.truth)
    _write_csv(_artifact(config, "truth_test.csv"), ["scene_id", "archetype"],
               result_test.truth)
    print(f"synth: {len(result_ref.scene_set.scenes)} REF + "
          f"{len(result_test.scene_set.scenes)} TEST scenes -> {config.out_dir}")


def _scene_paths(config: RunConfig, role: str) -> Path:
    default = _artifact(config, f"scenes_{role}.json")
    configured = config.scenes_ref if role == "ref" else config.scenes_test
    return configured if configured is not None else default


def _roles(role: str) -> list[str]:
    if role == "both":
        return ["ref", "test"]
    if role in ("ref", "test"):
        return [role]
    raise ConfigError(f"role must be ref, test, or both, not {role!r}")


def cmd_build_graphs(config: RunConfig, role: str) -> None:
    """Scenes -> actor graphs plus a per-scene stats CSV."""
    map_path = config.map_path or _require(_artifact(config, "map.json"), "synth")
    map_graph = load_map(map_path)
    for r in _roles(role):
        scenes_path = _require(_scene_paths(config, r), "synth")
        scene_set = load_scenes(scenes_path, map_graph)
        results = build_scene_graphs(map_graph, scene_set, config.construction,
                                     jobs=config.jobs)
        save_graphs(results, scene_set.scenes, _artifact(config, f"graphs_{r}.json"),
                    label=scene_set.label)
        rows = [(res.scene_id,
                 res.graph.n_nodes if res.graph else 0,
                 res.relations_discovered,
                 res.edges_discovered,
                 res.edges_final,
                 len(res.warnings),
                 res.error or "")
                for res in results]
        _write_csv(_artifact(config, f"graph_stats_{r}.csv"),
                   ["scene_id", "n_nodes", "relations_discovered",
                    "edges_discovered", "edges_final", "n_warnings", "error"],
                   rows)
        total_disc = sum(r.edges_discovered for r in results)
        total_final = sum(r.edges_final for r in results)
        print(f"build-graphs[{r}]: {len(results)} scenes, "
              f"{total_disc} discovered -> {total_final} final edges")


def cmd_match(config: RunConfig, role: str) -> None:
    """Actor graphs -> coverage table (per-scene archetype hits)."""
    catalog = config.catalog()
    for r in _roles(role):
        path = _require(_artifact(config, f"graphs_{r}.json"), "build-graphs")
        records, graphs = load_graphs(path)
        scene_ids = [rec["scene_id"] for rec in records]
        table = arch.build_coverage_table(catalog, graphs, scene_ids,
                                          config.policy(),
                                          label="REF" if r == "ref" else "TEST")
        save_coverage_table(table, _artifact(config, f"coverage_{r}.json"))
        print(f"match[{r}]: {table.n_scenes} scenes x {len(catalog)} archetypes, "
              f"node coverage {table.node_coverage_fraction():.3f}")


def cmd_compare(config: RunConfig) -> None:
    """REF vs TEST coverage tables -> structural/holes/co-occurrence reports."""
    table_ref = load_coverage_table(_require(_artifact(config, "coverage_ref.json"), "match"))
    table_test = load_coverage_table(_require(_artifact(config, "coverage_test.json"), "match"))
    out = config.out_dir / "compare"

    structural = cov.structural_coverage(table_ref, table_test)
    _write_csv(out / "structural.csv",
               ["archetype", "coverage_ref_pct", "coverage_test_pct", "delta_pp"],
               [(r.archetype, r.coverage_ref_pct, r.coverage_test_pct, r.delta_pp)
                for r in structural.rows])

    hole_rows = []
    n_holes = 0
    for metric, bin_width in (("speed", cov.DEFAULT_SPEED_BIN_M_S),
                              ("path_length", cov.DEFAULT_PATH_LENGTH_BIN_M)):
        for name in table_ref.archetypes:
            if metric == "speed":
                ref_roles = cov.role_sample_sets(table_ref, name)
                test_roles = cov.role_sample_sets(table_test, name)
                pairs = [(role, ref_roles[role], test_roles.get(role, []))
                         for role in sorted(ref_roles)]
            else:
                pairs = [("", cov.path_length_samples(table_ref, name),
                          cov.path_length_samples(table_test, name))]
            for role, ref_samples, test_samples in pairs:
                if not ref_samples:
                    continue
                holes = cov.detect_parametric_holes(ref_samples, test_samples, bin_width)
                for i, flag in enumerate(holes.hole_flags):
                    n_holes += int(flag)
                    hole_rows.append((name, role, metric,
                                      holes.bin_edges[i], holes.bin_edges[i + 1],
                                      holes.ref_density[i], holes.test_density[i],
                                      int(flag)))
    _write_csv(out / "holes.csv",
               ["archetype", "role", "metric", "bin_lo", "bin_hi",
                "ref_density", "test_density", "is_hole"],
               hole_rows)

    co_ref = cov.cooccurrence(table_ref)
    co_test = cov.cooccurrence(table_test)
    co_diff = cov.cooccurrence_diff(co_ref, co_test)
    for tag, matrix in (("ref", co_ref), ("test", co_test), ("diff", co_diff)):
        rows = [[name] + [float(x) for x in matrix.values[i]]
                for i, name in enumerate(matrix.archetypes)]
        _write_csv(out / f"cooccurrence_{tag}.csv",
                   ["archetype"] + list(matrix.archetypes), rows)

    top = structural.rows[0] if structural.rows else None
    _write_json(out / "summary.json", {
        "n_scenes_ref": table_ref.n_scenes,
        "n_scenes_test": table_test.n_scenes,
        "node_coverage_ref": table_ref.node_coverage_fraction(),
        "node_coverage_test": table_test.node_coverage_fraction(),
        "max_abs_delta_pp": max((abs(r.delta_pp) for r in structural.rows), default=0.0),
        "n_parametric_holes": n_holes,
        "max_cooccurrence_diff_pp": float(np.max(np.abs(co_diff.values)))
        if len(co_diff.archetypes) else 0.0,
        "top_archetype": None if top is None else top.archetype,
    })
    print(f"compare: {n_holes} parametric hole bins, "
          f"max structural delta {max((abs(r.delta_pp) for r in structural.rows), default=0.0):.1f} pp")


def _load_graphs_for_embedding(config: RunConfig, roles: list[str]):
    all_records, all_graphs = [], []
    for r in roles:
        path = _require(_artifact(config, f"graphs_{r}.json"), "build-graphs")
        records, graphs = load_graphs(path)
        for rec, graph in zip(records, graphs):
            if graph.n_nodes == 0:
                continue
            all_records.append(rec)
            all_graphs.append(graph)
    return all_records, all_graphs


def cmd_train(config: RunConfig) -> None:
    """Train the contrastive encoder jointly on REF and TEST graphs."""
    _, graphs = _load_graphs_for_embedding(config, ["ref", "test"])
    encoder = config.encoder.with_updates(seed=config.seed)
    result = train(encoder, graphs)
    model_dir = config.out_dir / "model"
    model_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model_dir / "checkpoint.json", result.config,
                    result.feature_stats, result.params)
    _write_csv(model_dir / "loss_history.csv",
               ["epoch", "stage", "lr", "train_loss", "val_loss"],
               [(h.epoch, h.stage, h.lr, h.train_loss,
                 "" if h.val_loss is None else h.val_loss)
                for h in result.history])
    final = result.history[-1]
    print(f"train: {len(result.history)} epochs, final train loss {final.train_loss:.4f}")


def cmd_embed(config: RunConfig, role: str) -> None:
    """Encode graphs into unit-norm embedding rows (CSV per role)."""
    ckpt_path = _require(config.out_dir / "model" / "checkpoint.json", "train")
    encoder, stats, params = load_checkpoint(ckpt_path)
    for r in _roles(role):
        records, graphs = _load_graphs_for_embedding(config, [r])
        if not graphs:
            raise SceneCovError(f"no non-empty graphs for role {r}")
        rows = np.zeros((len(graphs), encoder.embed_dim))
        for i, graph in enumerate(graphs):
            embedding, _, _ = encode(params, encoder, featurize(graph, stats))
            rows[i] = embedding
        matrix = EmbeddingMatrix(
            tuple(rec["scene_id"] for rec in records),
            tuple(rec["source_tag"] for rec in records),
            rows)
        save_embeddings(matrix, _artifact(config, f"embeddings_{r}.csv"))
        print(f"embed[{r}]: {matrix.n} scenes -> {encoder.embed_dim}-dim unit vectors")


def _load_role_embeddings(config: RunConfig, role: str) -> EmbeddingMatrix:
    return load_embeddings(_require(_artifact(config, f"embeddings_{role}.csv"), "embed"))


def cmd_nn(config: RunConfig, role: str, query: str, k: int, metric: str) -> None:
    matrix = _load_role_embeddings(config, role)
    result = emb_an.nearest(matrix, query, k, metric)
    out = config.out_dir / "nn"
    _write_csv(out / f"neighbors_{query}.csv",
               ["rank", "scene_id", "distance", "metric", "truncated"],
               [(i + 1, sid, d, result.metric, int(result.truncated))
                for i, (sid, d) in enumerate(zip(result.scene_ids, result.distances))])
    print(f"nn: top-{len(result.scene_ids)} neighbors of {query} "
          f"({metric}), nearest = {result.scene_ids[0] if result.scene_ids else 'n/a'}")


def cmd_pca(config: RunConfig, role: str, dims: int) -> None:
    matrix = _load_role_embeddings(config, role)
    result = emb_an.pca(matrix.vectors, dims, seed=config.seed)
    out = config.out_dir / "pca"
    _write_csv(out / "projection.csv",
               ["scene_id", "source_tag"] + [f"pc{i}" for i in range(result.projected.shape[1])],
               [[sid, tag] + [float(x) for x in row]
                for sid, tag, row in zip(matrix.scene_ids, matrix.source_tags,
                                         result.projected)])
    _write_csv(out / "variance.csv",
               ["component", "explained_variance_ratio"],
               list(enumerate(result.explained_variance_ratio)))
    print(f"pca: {result.projected.shape[1]} components, "
          f"ratios {[round(r, 4) for r in result.explained_variance_ratio]}")


def cmd_density(config: RunConfig) -> None:
    ref = _load_role_embeddings(config, "ref")
    test = _load_role_embeddings(config, "test")
    knobs = dict(config.density)
    k_density = int(knobs.get("k_density", 10))
    density_quantile = float(knobs.get("density_quantile", 0.5))
    radius_quantile = float(knobs.get("radius_quantile", 0.9))
    report = emb_an.density_coverage(ref.vectors, test.vectors, k_density,
                                     density_quantile, radius_quantile)
    out = config.out_dir / "density"
    _write_csv(out / "report.csv",
               ["scene_id", "density", "knn_distance", "relevant", "covered"],
               [(sid, float(report.densities[i]), float(report.knn_distances[i]),
                 int(report.relevant[i]), int(report.covered[i]))
                for i, sid in enumerate(ref.scene_ids)])
    _write_json(out / "summary.json", {
        "k_density": k_density,
        "density_quantile": density_quantile,
        "radius_quantile": radius_quantile,
        "radius": report.radius,
        "density_threshold": report.density_threshold,
        "n_relevant": int(report.relevant.sum()),
        "covered_fraction": report.covered_fraction,
    })
    print(f"density: covered fraction {report.covered_fraction:.3f} "
          f"({int(report.relevant.sum())} relevant REF points)")


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenecov",
        description="Graph-based traffic scene coverage analysis")
    parser.add_argument("--config", type=Path, default=None,
                        help="run configuration JSON")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the run seed")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel workers for per-scene stages")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate a synthetic map + REF/TEST scenes")
    for name in ("build-graphs", "match", "embed"):
        p = sub.add_parser(name)
        p.add_argument("--role", choices=["ref", "test", "both"], default="both")
    sub.add_parser("compare", help="structural/parametric/co-occurrence reports")
    sub.add_parser("train", help="train the contrastive encoder")
    p = sub.add_parser("nn", help="nearest-neighbor query in embedding space")
    p.add_argument("--role", choices=["ref", "test"], default="ref")
    p.add_argument("--query", required=True, help="scene id")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--metric", choices=["euclidean", "cosine"], default="euclidean")
    p = sub.add_parser("pca", help="PCA projection of embeddings")
    p.add_argument("--role", choices=["ref", "test"], default="ref")
    p.add_argument("--dims", type=int, default=2)
    sub.add_parser("density", help="density coverage of TEST against REF")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_run_config(args.config)
        if args.out is not None:
            config.out_dir = args.out
        if args.seed is not None:
            config.seed = args.seed
        if args.jobs is not None:
            config.jobs = args.jobs
        if args.command == "synth":
            cmd_synth(config)
        elif args.command == "build-graphs":
            cmd_build_graphs(config, args.role)
        elif args.command == "match":
            cmd_match(config, args.role)
        elif args.command == "compare":
            cmd_compare(config)
        elif args.command == "train":
            cmd_train(config)
        elif args.command == "embed":
            cmd_embed(config, args.role)
        elif args.command == "nn":
            cmd_nn(config, args.role, args.query, args.k, args.metric)
        elif args.command == "pca":
            cmd_pca(config, args.role, args.dims)
        elif args.command == "density":
            cmd_density(config)
        else:  # pragma: no cover
            parser.error(f"unknown command {args.command}")
    except SceneCovError as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
              file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - internal failure boundary
        print(json.dumps({"error": {"type": "InternalError",
                                    "message": f"{type(exc).__name__}: {exc}"}}),
              file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

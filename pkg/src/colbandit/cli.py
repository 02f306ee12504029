"""Command-line front end: run experiments, generate data, verify artifacts.

Three subcommands wired to the library with no behavior of their own:

* ``run`` executes a configured method over a set of query instances and
  writes per-query JSON-lines plus an aggregated frontier CSV;
* ``gen`` materializes synthetic matrices or embedding sets on disk;
* ``verify`` checks data files and Stage-1 artifacts for structural and
  soundness violations.

Configuration is YAML; the ``COL_BANDIT_LOG`` environment variable sets the
log level. All result files are written atomically and deterministically, so
rerunning a seeded config reproduces them byte for byte.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
import yaml

from . import io as cio
from .bandit import BanditConfig, run
from .baselines import doc_top_margin, doc_uniform, full_rerank
from .bounds import CellBounds
from .evaluation import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_GAMMA_GRID,
    EvalInstance,
    aggregate_frontier,
    instance_seed,
    read_qrels,
    score_result,
    write_frontier_csv,
)
from .oracle import DocTokens, MaxSimOracle, QueryTokens, Similarity
from .pipeline import derive_bounds, generate_candidates, load_candidates
from .synth import PROFILES, SynthSpec, gen_embeddings, gen_matrix

log = logging.getLogger("colbandit")

MODES = ("bandit", "doc-uniform", "doc-top-margin", "full")


class ConfigError(click.ClickException):
    """Configuration problem; the message names the offending field."""


def _load_config(path: Path) -> dict:
    try:
        cfg = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not parseable YAML: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be a mapping")
    return cfg


def _section(cfg: dict, name: str, required: bool = False) -> dict:
    value = cfg.get(name)
    if value is None:
        if required:
            raise ConfigError(f"config: {name}: section is required")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config: {name}: must be a mapping")
    return value


def _field(section: dict, section_name: str, key: str, cast, default=None, required: bool = False):
    if key not in section:
        if required:
            raise ConfigError(f"config: {section_name}.{key}: field is required")
        return default
    try:
        return cast(section[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {section_name}.{key}: {exc}")


def _synth_spec(section: dict, seed_override: int | None = None) -> SynthSpec:
    seed = section.get("seed", 0) if seed_override is None else seed_override
    value_range = section.get("value_range", [0.0, 1.0])
    try:
        return SynthSpec(
            n_docs=int(section.get("n_docs", 0)),
            n_tokens=int(section.get("n_tokens", 0)),
            profile=str(section.get("profile", "uniform-random")),
            value_range=(float(value_range[0]), float(value_range[1])),
            noise_scale=float(section.get("noise_scale", 0.05)),
            seed=seed,
            boundary_k=int(section.get("boundary_k", 1)),
        )
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"config: synth: {exc}")


def _similarity_from(cfg: dict, ann_bounds: bool) -> Similarity:
    sim = _section(cfg, "similarity")
    rng = sim.get("range", [-1.0, 1.0])
    clamp = sim.get("clamp_negative")
    if clamp is None:
        # a zero per-cell floor is only sound for nonnegative scores, so the
        # scan-derived bound mode clamps unless told otherwise
        clamp = ann_bounds
    try:
        return Similarity(
            kind=str(sim.get("kind", "cosine")),
            range_lo=float(rng[0]),
            range_hi=float(rng[1]),
            clamp_negative=bool(clamp),
        )
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"config: similarity: {exc}")


def _two_stage_instance(
    query: QueryTokens,
    docs: list[DocTokens],
    similarity: Similarity,
    k_prime: int,
    ann_bounds: bool,
    k: int,
    query_id: str,
    relevant: frozenset,
) -> EvalInstance:
    """Build one rerank instance, with Stage-1 candidates when requested."""
    full_oracle = MaxSimOracle(query, docs, similarity)
    exact_ids = tuple(docs[i].doc_id for i in full_oracle.exact_topk(min(k, len(docs))))
    if ann_bounds:
        candidates, neighbor_lists = generate_candidates(query, docs, similarity, k_prime)
        pool = [docs[i] for i in candidates.doc_indices]
        oracle = MaxSimOracle(query, pool, similarity)
        bounds = derive_bounds(candidates, neighbor_lists, similarity)
    else:
        oracle = full_oracle
        bounds = CellBounds.uniform(
            len(docs), query.n_tokens, similarity.range_lo, similarity.range_hi
        )
    return EvalInstance(
        oracle=oracle, bounds=bounds, query_id=query_id, exact_ids=exact_ids, relevant=relevant
    )


def _build_instances(cfg: dict, k: int) -> list[EvalInstance]:
    data = _section(cfg, "data", required=True)
    if len(data) != 1:
        raise ConfigError(
            f"config: data: exactly one of synth | matrix | embeddings, got {sorted(data)}"
        )
    pipeline = _section(cfg, "pipeline")
    bounds_mode = str(pipeline.get("bounds", "generic"))
    if bounds_mode not in ("ann", "generic"):
        raise ConfigError(f"config: pipeline.bounds: must be 'ann' or 'generic', got {bounds_mode!r}")
    k_prime = _field(pipeline, "pipeline", "k_prime", int, default=10)
    if k_prime < 1:
        raise ConfigError(f"config: pipeline.k_prime: must be at least 1, got {k_prime}")

    qrels_path = cfg.get("qrels")
    qrels = read_qrels(qrels_path) if qrels_path else {}

    def relevant_for(query_id: str) -> frozenset:
        return frozenset(qrels.get(query_id, ()))

    source = next(iter(data))
    payload = data[source]

    if source == "synth":
        if not isinstance(payload, dict):
            raise ConfigError("config: data.synth: must be a mapping")
        n_queries = _field(payload, "data.synth", "queries", int, default=1)
        if n_queries < 1:
            raise ConfigError(f"config: data.synth.queries: must be at least 1, got {n_queries}")
        emb = payload.get("embeddings")
        base_seed = payload.get("seed", 0)
        instances = []
        for qi in range(n_queries):
            spec = _synth_spec({**payload, "seed": instance_seed(base_seed, qi)})
            query_id = f"q{qi:04d}"
            if emb is None:
                if bounds_mode == "ann":
                    raise ConfigError(
                        "config: pipeline.bounds: 'ann' needs embeddings "
                        "(data.synth.embeddings or data.embeddings)"
                    )
                matrix = gen_matrix(spec)
                oracle = MaxSimOracle.from_matrix(matrix, spec.value_range)
                bounds = CellBounds.uniform(
                    spec.n_docs, spec.n_tokens, spec.value_range[0], spec.value_range[1]
                )
                instances.append(
                    EvalInstance(
                        oracle=oracle, bounds=bounds, query_id=query_id,
                        relevant=relevant_for(query_id),
                    )
                )
            else:
                if not isinstance(emb, dict):
                    raise ConfigError("config: data.synth.embeddings: must be a mapping")
                dim = _field(emb, "data.synth.embeddings", "dim", int, required=True)
                doc_len = _field(emb, "data.synth.embeddings", "doc_len", int, required=True)
                similarity = _similarity_from(cfg, bounds_mode == "ann")
                query, docs = gen_embeddings(spec, dim, doc_len)
                instances.append(
                    _two_stage_instance(
                        query, docs, similarity, k_prime, bounds_mode == "ann",
                        k, query_id, relevant_for(query_id),
                    )
                )
        return instances

    if source == "matrix":
        if bounds_mode == "ann":
            raise ConfigError("config: pipeline.bounds: 'ann' needs embeddings, not a matrix file")
        path = Path(str(payload))
        if not path.is_file():
            raise ConfigError(f"config: data.matrix: no such file: {path}")
        sim = _similarity_from(cfg, False)
        matrix = cio.read_matrix(path)
        oracle = MaxSimOracle.from_matrix(matrix, (sim.range_lo, sim.range_hi))
        bounds = CellBounds.uniform(*matrix.shape, sim.range_lo, sim.range_hi)
        query_id = path.stem
        return [
            EvalInstance(
                oracle=oracle, bounds=bounds, query_id=query_id, relevant=relevant_for(query_id)
            )
        ]

    if source == "embeddings":
        if not isinstance(payload, dict):
            raise ConfigError("config: data.embeddings: must be a mapping")
        manifest = payload.get("manifest")
        if not manifest:
            raise ConfigError("config: data.embeddings.manifest: field is required")
        if not Path(manifest).is_file():
            raise ConfigError(f"config: data.embeddings.manifest: no such file: {manifest}")
        query_paths: list[Path]
        if "queries" in payload:
            query_paths = [Path(q) for q in payload["queries"]]
        elif "query" in payload:
            query_paths = [Path(payload["query"])]
        else:
            raise ConfigError("config: data.embeddings: needs 'query' or 'queries'")
        for qp in query_paths:
            if not qp.is_file():
                raise ConfigError(f"config: data.embeddings: no such query file: {qp}")
        similarity = _similarity_from(cfg, bounds_mode == "ann")
        docs = [
            DocTokens(doc_id, cio.read_vectors(p)) for doc_id, p in cio.read_manifest(manifest)
        ]
        instances = []
        for qp in query_paths:
            query = QueryTokens(cio.read_vectors(qp))
            instances.append(
                _two_stage_instance(
                    query, docs, similarity, k_prime, bounds_mode == "ann",
                    k, qp.stem, relevant_for(qp.stem),
                )
            )
        return instances

    raise ConfigError(f"config: data.{source}: unknown data source")


def _bandit_config(cfg: dict, k: int, seed_override: int | None) -> BanditConfig:
    section = _section(cfg, "bandit")
    seed = section.get("seed", 0) if seed_override is None else seed_override
    try:
        return BanditConfig(
            k=k,
            delta=float(section.get("delta", 0.01)),
            alpha_ef=float(section.get("alpha_ef", 1.0)),
            epsilon=float(section.get("epsilon", 0.1)),
            explore_mode=str(section.get("explore_mode", "epsilon-greedy")),
            gamma_init=float(section.get("gamma_init", 0.0)),
            c=float(section.get("c", 1.0)),
            union_mode=str(section.get("union_mode", "per-document")),
            seed=seed,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config: bandit: {exc}")


def _param_grid(cfg: dict, mode: str, seed_override: int | None) -> list[float]:
    sweep = _section(cfg, "sweep")

    def parse_grid(raw, default):
        if raw is None:
            return None
        if raw == "default":
            return list(default)
        try:
            return [float(v) for v in raw]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config: sweep: {exc}")

    if mode == "bandit":
        grid = parse_grid(sweep.get("alpha"), DEFAULT_ALPHA_GRID)
        if grid is None:
            grid = [_bandit_config(cfg, 1, seed_override).alpha_ef]
        return grid
    if mode in ("doc-uniform", "doc-top-margin"):
        grid = parse_grid(sweep.get("gamma"), DEFAULT_GAMMA_GRID)
        if grid is None:
            budget = _section(cfg, "budget")
            grid = [_field(budget, "budget", "gamma", float, default=0.25)]
        return grid
    return [1.0]


def _execute_job(job: tuple) -> tuple[dict, tuple]:
    """Run one (method, param, instance) cell; shaped for executor.map."""
    mode, param, inst, k, bandit_cfg, budget_seed, want_trace = job
    k_eff = min(k, inst.oracle.n_docs)
    if mode == "bandit":
        result = run(inst.oracle, inst.bounds, replace(bandit_cfg, k=k_eff, alpha_ef=param))
    elif mode == "doc-uniform":
        result = doc_uniform(inst.oracle, k_eff, param, seed=budget_seed)
    elif mode == "doc-top-margin":
        result = doc_top_margin(inst.oracle, inst.bounds, k_eff, param)
    else:
        result = full_rerank(inst.oracle, k_eff)
    overlap, rec, ndcg, mrr = score_result(inst, result.topk, k)
    record = {
        "query_id": inst.query_id,
        "method": mode,
        "param": param,
        "topk": list(result.topk),
        "topk_ids": [inst.doc_id(i) for i in result.topk],
        "coverage": result.coverage,
        "reveals": len(result.reveals),
        "iterations": result.iterations,
        "terminated_by": result.terminated_by,
        "overlap": overlap,
    }
    if rec is not None:
        record.update({"recall": rec, "ndcg": ndcg, "mrr": mrr})
    if want_trace:
        record["trace"] = [[i, t, v] for i, t, v in result.reveals]
    return record, (result.coverage, overlap, rec, ndcg, mrr)


def _write_text_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


@click.group()
def main() -> None:
    """Adaptive late-interaction reranking experiments."""
    level = getattr(logging, os.environ.get("COL_BANDIT_LOG", "WARNING").upper(), None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command(name="run")
@click.option(
    "--config", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="YAML experiment configuration.",
)
@click.option("--seed", "seed_override", type=int, default=None, help="Override the method seed.")
@click.option("--workers", type=click.IntRange(1), default=1, show_default=True,
              help="Parallel query workers.")
@click.option("--trace", "want_trace", is_flag=True, help="Embed full reveal traces in the results.")
def cmd_run(config_path: Path, seed_override: int | None, workers: int, want_trace: bool) -> None:
    """Execute the configured method over all query instances."""
    cfg = _load_config(config_path)
    mode = str(cfg.get("mode", ""))
    if mode not in MODES:
        raise ConfigError(f"config: mode: must be one of {MODES}, got {mode!r}")
    k = _field(cfg, "(top level)", "k", int, required=True)
    if k < 1:
        raise ConfigError(f"config: k: must be at least 1, got {k}")

    out = _section(cfg, "output")
    out_dir = Path(out.get("dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / str(out.get("results", "results.jsonl"))
    frontier_path = out_dir / str(out.get("frontier", "frontier.csv"))

    instances = _build_instances(cfg, k)
    grid = _param_grid(cfg, mode, seed_override)
    bandit_cfg = _bandit_config(cfg, k, seed_override)
    budget = _section(cfg, "budget")
    budget_seed = budget.get("seed", 0) if seed_override is None else seed_override

    jobs = []
    for param in grid:
        for idx, inst in enumerate(instances):
            per_cfg = replace(bandit_cfg, seed=instance_seed(bandit_cfg.seed, idx))
            jobs.append(
                (mode, float(param), inst, k, per_cfg, instance_seed(budget_seed, idx), want_trace)
            )

    log.info("running %d jobs (%d params x %d queries) with %d worker(s)",
             len(jobs), len(grid), len(instances), workers)
    if workers == 1:
        outcomes = [_execute_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_execute_job, jobs))

    lines = [json.dumps(record, sort_keys=True) for record, _ in outcomes]
    _write_text_atomic(results_path, "\n".join(lines) + "\n")

    points = []
    n_inst = len(instances)
    for gi, param in enumerate(grid):
        rows = [stats for _, stats in outcomes[gi * n_inst : (gi + 1) * n_inst]]
        points.append(aggregate_frontier(mode, float(param), rows))
    write_frontier_csv(frontier_path, points)

    unlabeled = sum(1 for inst in instances if not inst.relevant)
    if cfg.get("qrels") and unlabeled:
        log.warning("%d of %d queries had no relevance labels and were skipped "
                    "for recall/ndcg/mrr", unlabeled, n_inst)
    click.echo(f"wrote {results_path} ({len(lines)} rows) and {frontier_path} ({len(points)} points)")


@main.command(name="gen")
@click.option(
    "--config", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="YAML generation configuration.",
)
@click.option("--seed", "seed_override", type=int, default=None, help="Override the synth seed.")
def cmd_gen(config_path: Path, seed_override: int | None) -> None:
    """Generate synthetic data files from a spec."""
    cfg = _load_config(config_path)
    spec = _synth_spec(_section(cfg, "synth", required=True), seed_override)
    emit = str(cfg.get("emit", "matrix"))
    if emit not in ("matrix", "embeddings", "both"):
        raise ConfigError(f"config: emit: must be matrix | embeddings | both, got {emit!r}")
    out_dir = Path(_section(cfg, "output").get("dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    if emit in ("matrix", "both"):
        path = out_dir / "matrix.cbh1"
        cio.write_matrix(path, gen_matrix(spec))
        written.append(path)
    if emit in ("embeddings", "both"):
        emb = _section(cfg, "embeddings", required=True)
        dim = _field(emb, "embeddings", "dim", int, required=True)
        doc_len = _field(emb, "embeddings", "doc_len", int, required=True)
        try:
            query, docs = gen_embeddings(spec, dim, doc_len)
        except ValueError as exc:
            raise ConfigError(f"config: embeddings: {exc}")
        qpath = out_dir / "query.cbm"
        cio.write_vectors(qpath, query.vectors)
        written.append(qpath)
        docs_dir = out_dir / "docs"
        docs_dir.mkdir(exist_ok=True)
        entries = []
        for doc in docs:
            dpath = docs_dir / f"{doc.doc_id}.cbm"
            cio.write_vectors(dpath, doc.vectors)
            entries.append((doc.doc_id, f"docs/{doc.doc_id}.cbm"))
        mpath = out_dir / "manifest.jsonl"
        cio.write_manifest(mpath, entries)
        written.append(mpath)
    for path in written:
        click.echo(f"wrote {path}")


def _verify_vectors(path: Path, violations: list[str]) -> None:
    vecs = cio.read_vectors(path)
    if not np.all(np.isfinite(vecs)):
        violations.append(f"{path}: non-finite vector components")
        return
    norms = np.linalg.norm(vecs, axis=1)
    for idx in np.nonzero(np.abs(norms - 1.0) > 1e-6)[0]:
        violations.append(f"{path}: vector {idx} has norm {norms[idx]:.8f}, expected 1 within 1e-6")


def _verify_matrix(path: Path, violations: list[str]) -> None:
    matrix = cio.read_matrix(path)
    bad = np.argwhere(~np.isfinite(matrix))
    for i, t in bad:
        violations.append(f"{path}: non-finite cell ({i}, {t})")


def _verify_manifest(path: Path, violations: list[str]) -> None:
    entries = cio.read_manifest(path)
    dims = {}
    for doc_id, vec_path in entries:
        if not vec_path.is_file():
            violations.append(f"{path}: {doc_id}: missing file {vec_path}")
            continue
        try:
            _verify_vectors(vec_path, violations)
            dims[doc_id] = cio.read_vectors(vec_path).shape[1]
        except ValueError as exc:
            violations.append(str(exc))
    if len(set(dims.values())) > 1:
        violations.append(f"{path}: inconsistent embedding dims {sorted(set(dims.values()))}")


def _verify_candidates(path: Path, violations: list[str]) -> None:
    payload = load_candidates(path)
    hi = np.asarray(payload["hi"], dtype=np.float64)
    lo = float(payload["lo"])
    kth = np.asarray(payload["kth_sim"], dtype=np.float64)
    exact_pairs = {(r, t) for r, t in payload["exact_pairs"]}
    if np.any(hi < lo):
        violations.append(f"{path}: some hi bounds fall below the shared lo {lo}")
    expected = np.maximum(kth, lo)
    for (r, t) in np.argwhere(np.abs(hi - expected[None, :]) > 1e-12):
        if (int(r), int(t)) not in exact_pairs:
            violations.append(
                f"{path}: cell ({r}, {t}) bound {hi[r, t]} differs from kth_sim[{t}]={kth[t]} "
                "but is not an exact pair"
            )
    query_path, manifest_path = payload.get("query_path"), payload.get("manifest_path")
    if not query_path or not manifest_path:
        log.info("%s: no source paths recorded; skipping brute-force soundness check", path)
        return
    base = path.parent
    qp, mp = (base / query_path), (base / manifest_path)
    if not qp.is_file() or not mp.is_file():
        violations.append(f"{path}: recorded source paths missing ({qp}, {mp})")
        return
    sim_cfg = payload["similarity"]
    similarity = Similarity(
        kind=sim_cfg["kind"],
        range_lo=float(sim_cfg["range"][0]),
        range_hi=float(sim_cfg["range"][1]),
        clamp_negative=bool(sim_cfg["clamp_negative"]),
    )
    query = QueryTokens(cio.read_vectors(qp))
    entries = cio.read_manifest(mp)
    rows = list(enumerate(payload["doc_indices"]))
    if len(rows) > 512:
        picks = np.random.default_rng(0).choice(len(rows), size=512, replace=False)
        rows = [rows[int(j)] for j in sorted(picks)]
    for r, di in rows:
        if di >= len(entries):
            violations.append(f"{path}: doc_indices[{r}]={di} outside the manifest")
            continue
        doc_id, vec_path = entries[di]
        if doc_id != payload["doc_ids"][r]:
            violations.append(f"{path}: row {r} doc_id {payload['doc_ids'][r]!r} != manifest {doc_id!r}")
            continue
        scores = similarity.token_scores(cio.read_vectors(vec_path), query.vectors)
        h = scores.max(axis=0)
        for t in range(h.shape[0]):
            if h[t] > hi[r, t] + 1e-9:
                violations.append(
                    f"{path}: unsound bound at ({r}, {t}): true {h[t]!r} > hi {hi[r, t]!r}"
                )
            if (r, t) in exact_pairs and abs(h[t] - hi[r, t]) > 1e-6:
                violations.append(
                    f"{path}: exact pair ({r}, {t}) bound {hi[r, t]!r} drifted from true {h[t]!r}"
                )


@main.command(name="verify")
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_context
def cmd_verify(ctx: click.Context, data_path: Path) -> None:
    """Validate a data file; exit 0 on pass, 1 on violations."""
    violations: list[str] = []
    try:
        if data_path.suffix == ".json":
            kind = "candidates"
        else:
            kind = cio.sniff_format(data_path)
    except ValueError as exc:
        raise click.ClickException(str(exc))

    check = {
        "vectors": _verify_vectors,
        "matrix": _verify_matrix,
        "manifest": _verify_manifest,
        "candidates": _verify_candidates,
    }[kind]
    try:
        check(data_path, violations)
    except ValueError as exc:
        violations.append(str(exc))

    if violations:
        for line in violations[:10]:
            click.echo(f"FAIL {line}")
        extra = len(violations) - 10
        if extra > 0:
            click.echo(f"... and {extra} more")
        click.echo(f"{data_path}: {kind} check FAILED with {len(violations)} violation(s)")
        ctx.exit(1)
    click.echo(f"{data_path}: {kind} check passed")


if __name__ == "__main__":
    main()

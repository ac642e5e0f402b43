"""``synthq`` command line.

Every command that takes ``--out DIR`` writes its primary outputs there plus a
``manifest.json``; ``synthq replay MANIFEST --out DIR`` re-runs it.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .catalog import (
    Catalog,
    CatalogError,
    generate_synthetic_catalog,
    generate_synthetic_query_log,
    load_catalog,
    load_query_log,
    write_catalog,
    write_query_log,
)
from .config import Config, file_sha256
from .judge import (
    JudgeRules,
    corpus_vocabulary,
    judge_records,
    llm_judge_records,
    summarize,
    write_verdicts_csv,
)
from .qac import QacIndex, RerankWeights, build_qac_index
from .qgen import (
    GenerationError,
    GenerationTable,
    build_prompt,
    generate_catalog_template,
    parse_llm_response,
)
from .retrieval import BM25Params, InvertedIndex, build_documents, build_index
from .service import BM25_FILE, QAC_FILE, SearchService, ServiceState, Snapshot, search_rows, suggestion_rows
from .simulator import (
    Simulation,
    SimulationConfig,
    share_table_markdown,
    write_entity_csv,
    write_share_csv,
    write_sweep_csv,
)
from .textproc import AnalyzerConfig

logger = logging.getLogger("synthq")

MANIFEST = "manifest.json"
_PathIn = click.Path(exists=True, dir_okay=False, path_type=str)
_DirIn = click.Path(exists=True, file_okay=False, path_type=str)


class UsageError(click.UsageError):
    pass


# --- shared helpers ----------------------------------------------------------

def _config(path: str | None) -> Config:
    return Config.load(path)


def _analyzer(cfg: Config) -> AnalyzerConfig:
    return AnalyzerConfig.from_mapping(cfg.section("analyzer"))


def _bm25(cfg: Config) -> BM25Params:
    return BM25Params(float(cfg.get("bm25.k1")), float(cfg.get("bm25.b")))


def _weights(cfg: Config, flag: str | None) -> RerankWeights:
    if flag:
        return RerankWeights.parse(flag)
    return RerankWeights.parse(cfg.section("qac")["weights"])


def _replay_argv(ctx: click.Context) -> list[str]:
    argv = [ctx.command.name]
    for param in ctx.command.params:
        if not isinstance(param, click.Option) or param.name == "out":
            continue
        value = ctx.params.get(param.name)
        if value is None:
            continue
        flag = next(o for o in param.opts if o.startswith("--"))
        if param.is_flag:
            if value:
                argv.append(flag)
            continue
        if isinstance(param.type, click.Path):
            value = str(Path(value).resolve())
        argv += [flag, str(value)]
    return argv


def _write_manifest(ctx: click.Context, out: Path, outputs: list[str], started: str) -> None:
    inputs = {}
    for param in ctx.command.params:
        value = ctx.params.get(param.name)
        if isinstance(param, click.Option) and isinstance(param.type, click.Path) and value:
            p = Path(value)
            if p.is_file():
                inputs[str(p.resolve())] = file_sha256(p)
            elif p.is_dir() and param.name != "out":
                for f in sorted(p.iterdir()):
                    if f.is_file() and f.name != MANIFEST:
                        inputs[str(f.resolve())] = file_sha256(f)
    manifest = {
        "command": ctx.command.name,
        "argv": _replay_argv(ctx),
        "config": ctx.params.get("config"),
        "seed": ctx.params.get("seed"),
        "inputs": inputs,
        "outputs": {name: file_sha256(out / name) for name in outputs},
        "started_at": started,
        "finished_at": _now(),
        "synthq_version": __version__,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _out_dir(out: str | None) -> Path | None:
    if out is None:
        return None
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_table(path: str | None) -> GenerationTable | None:
    return GenerationTable.load(path) if path else None


def _json_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def config_option(f):
    return click.option("--config", "config", type=_PathIn, default=None,
                        help="YAML/JSON config file; flags override it.")(f)


def out_option(required: bool = True):
    return click.option("--out", type=click.Path(file_okay=False, path_type=str),
                        required=required, help="Output directory.")


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True)
def main(verbose: int) -> None:
    """Synthetic query generation and retrievability toolkit."""
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


# --- data --------------------------------------------------------------------

@main.command("synth-catalog")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--counts", default="100,100,100", show_default=True,
              help="audiobook,playlist,podcast entity counts.")
@click.option("--log-size", type=int, default=2000, show_default=True)
@config_option
@out_option()
@click.pass_context
def synth_catalog(ctx, seed, counts, log_size, config, out):
    """Write a deterministic desk-scale catalog and query log."""
    started = _now()
    try:
        triple = tuple(int(x) for x in counts.split(","))
        if len(triple) != 3:
            raise ValueError
    except ValueError:
        raise UsageError("--counts takes three comma-separated integers") from None
    out_p = _out_dir(out)
    catalog = generate_synthetic_catalog(seed, triple)
    write_catalog(catalog, out_p / "catalog.jsonl")
    write_query_log(generate_synthetic_query_log(catalog, seed, log_size), out_p / "log.jsonl")
    _write_manifest(ctx, out_p, ["catalog.jsonl", "log.jsonl"], started)
    click.echo(f"wrote {len(catalog)} entities and {log_size} log queries to {out_p}")


@main.command()
@click.option("--catalog", type=_PathIn, required=True)
@click.option("--log", type=_PathIn, default=None)
@click.option("--min-query-len", type=int, default=None,
              help="Keep only log queries longer than this many characters.")
@config_option
@out_option()
@click.pass_context
def ingest(ctx, catalog, log, min_query_len, config, out):
    """Validate and normalize a catalog (and query log)."""
    started = _now()
    cfg = _config(config)
    cfg.set("simulation.min_query_len", min_query_len)
    out_p = _out_dir(out)
    try:
        cat = load_catalog(catalog)
        stats = {"entities": len(cat),
                 "by_type": {t: sum(1 for e in cat.values() if e.entity_type.value == t)
                             for t in ("audiobook", "playlist", "podcast")}}
        write_catalog(cat, out_p / "catalog.jsonl")
        outputs = ["catalog.jsonl"]
        if log:
            qlog = load_query_log(log, cfg.get("simulation.min_query_len"))
            unknown = sum(1 for r in qlog if r.target_entity_id and r.target_entity_id not in cat)
            stats.update(log_records=len(qlog), log_dropped=qlog.dropped, log_unknown_targets=unknown)
            write_query_log(qlog.records, out_p / "log.jsonl")
            outputs.append("log.jsonl")
    except CatalogError as exc:
        raise click.ClickException(str(exc)) from None
    (out_p / "ingest_stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    outputs.append("ingest_stats.json")
    _write_manifest(ctx, out_p, outputs, started)
    click.echo(json.dumps(stats, sort_keys=True))


@main.command()
@click.option("--catalog", type=_PathIn, required=True)
@click.option("--llm", is_flag=True, help="Generate with the configured LLM endpoint.")
@config_option
@out_option()
@click.pass_context
def qgen(ctx, catalog, llm, config, out):
    """Generate descriptors and synthetic queries for every audiobook."""
    started = _now()
    cfg = _config(config)
    cat = _load_catalog_or_fail(catalog)
    audiobooks = [e for e in cat.values() if e.entity_type.value == "audiobook"]
    if llm:
        from .llm_client import LlmClient, LlmError, LlmSettings

        try:
            client = LlmClient(LlmSettings.from_mapping(cfg.section("llm")))
            responses = client.complete_many([build_prompt(e) for e in audiobooks])
        except LlmError as exc:
            raise click.ClickException(str(exc)) from None
        records, failed = [], 0
        for e, resp in zip(audiobooks, responses):
            try:
                records.append(parse_llm_response(e.id, resp.text))
            except GenerationError as exc:
                failed += 1
                logger.warning("%s", exc)
        if audiobooks and not records:
            raise click.ClickException("every LLM generation failed")
    else:
        records = generate_catalog_template(audiobooks)
    table = GenerationTable.from_records(records)
    out_p = _out_dir(out)
    table.write(out_p / "generated.jsonl")
    _write_manifest(ctx, out_p, ["generated.jsonl"], started)
    click.echo(f"{len(records)} records, {len(table.queries)} distinct queries, "
               f"{len(table.descriptors)} descriptor rows")


def _load_catalog_or_fail(path: str) -> Catalog:
    try:
        return load_catalog(path)
    except CatalogError as exc:
        raise click.ClickException(f"{path}: {exc}") from None


def _build_indexes(cfg: Config, catalog: str, log: str | None, gen: str | None,
                   augment: bool = True) -> tuple[InvertedIndex, QacIndex]:
    cat = _load_catalog_or_fail(catalog)
    table = _load_table(gen)
    records = table.records() if (table and augment) else None
    analyzer = _analyzer(cfg)
    bm25 = build_index(build_documents(cat.values(), records, analyzer), _bm25(cfg), analyzer)
    log_records = load_query_log(log).records if log else []
    qac = build_qac_index(cat, log_records, table.queries if table else [])
    return bm25, qac


@main.command()
@click.option("--catalog", type=_PathIn, required=True)
@click.option("--log", type=_PathIn, default=None)
@click.option("--gen", type=_PathIn, default=None, help="Generated-queries table.")
@click.option("--no-augment", is_flag=True, help="Index base documents even when --gen is given.")
@config_option
@out_option()
@click.pass_context
def index(ctx, catalog, log, gen, no_augment, config, out):
    """Build the BM25 and QAC indexes."""
    started = _now()
    cfg = _config(config)
    bm25, qac = _build_indexes(cfg, catalog, log, gen, augment=not no_augment)
    out_p = _out_dir(out)
    bm25.save(out_p / BM25_FILE)
    qac.save(out_p / QAC_FILE)
    _write_manifest(ctx, out_p, [BM25_FILE, QAC_FILE], started)
    click.echo(f"indexed {bm25.N} documents ({len(bm25.terms)} terms), {len(qac)} completions")


def _indexes_for_query(cfg, index_dir, catalog, log, gen, no_augment=False):
    if index_dir:
        base = Path(index_dir)
        bm25 = InvertedIndex.load(base / BM25_FILE) if (base / BM25_FILE).exists() else None
        qac = QacIndex.load(base / QAC_FILE) if (base / QAC_FILE).exists() else None
        return bm25, qac
    if not catalog:
        raise UsageError("give --index-dir or --catalog")
    return _build_indexes(cfg, catalog, log, gen, augment=not no_augment)


@main.command("suggest")
@click.option("--prefix", required=True)
@click.option("--n", "n", type=click.IntRange(min=1), default=None, help="Completions returned (N).")
@click.option("--k", "k", type=click.IntRange(min=1), default=None, help="Candidates per source (K).")
@click.option("--weights", default=None, help="Re-rank weights, e.g. v=1,s=0.2,synthetic_queries=0.1")
@click.option("--index-dir", type=_DirIn, default=None)
@click.option("--catalog", type=_PathIn, default=None)
@click.option("--log", type=_PathIn, default=None)
@click.option("--gen", type=_PathIn, default=None)
@config_option
@out_option(required=False)
@click.pass_context
def suggest_cmd(ctx, prefix, n, k, weights, index_dir, catalog, log, gen, config, out):
    """Print ranked completions for a prefix as JSON lines."""
    started = _now()
    cfg = _config(config)
    cfg.set("qac.N", n)
    cfg.set("qac.K", k)
    _, qac = _indexes_for_query(cfg, index_dir, catalog, log, gen)
    if qac is None:
        raise click.ClickException("no QAC index found")
    rows = suggestion_rows(qac, prefix, int(cfg.get("qac.K")), int(cfg.get("qac.N")), _weights(cfg, weights))
    lines = [_json_line(r) for r in rows]
    for line in lines:
        click.echo(line)
    out_p = _out_dir(out)
    if out_p:
        (out_p / "suggestions.jsonl").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
        _write_manifest(ctx, out_p, ["suggestions.jsonl"], started)


@main.command("search")
@click.option("--query", "query", required=True)
@click.option("--k", "k", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--index-dir", type=_DirIn, default=None)
@click.option("--catalog", type=_PathIn, default=None)
@click.option("--gen", type=_PathIn, default=None)
@click.option("--no-augment", is_flag=True)
@config_option
@out_option(required=False)
@click.pass_context
def search_cmd(ctx, query, k, index_dir, catalog, gen, no_augment, config, out):
    """Print BM25 hits as JSON lines."""
    started = _now()
    cfg = _config(config)
    bm25, _ = _indexes_for_query(cfg, index_dir, catalog, None, gen, no_augment)
    if bm25 is None:
        raise click.ClickException("no BM25 index found")
    lines = [_json_line(r) for r in search_rows(bm25, query, k)]
    for line in lines:
        click.echo(line)
    out_p = _out_dir(out)
    if out_p:
        (out_p / "hits.jsonl").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
        _write_manifest(ctx, out_p, ["hits.jsonl"], started)


# --- experiments -----------------------------------------------------------

def _simulation(cfg: Config, catalog: str, log: str, gen: str | None) -> Simulation:
    cat = _load_catalog_or_fail(catalog)
    try:
        qlog = load_query_log(log, cfg.get("simulation.min_query_len"))
    except CatalogError as exc:
        raise click.ClickException(f"{log}: {exc}") from None
    table = _load_table(gen)
    records = table.records() if table else None
    queries = table.queries if table else []
    analyzer = _analyzer(cfg)
    return Simulation(cat, records, qlog.records, queries, _bm25(cfg), analyzer)


def _parse_configs(spec: str) -> list[str]:
    out = []
    for part in spec.split(","):
        part = part.strip().lower().removeprefix("config")
        if part not in {"1", "2", "3", "4"}:
            raise UsageError(f"unknown configuration {part!r}; use 1-4")
        out.append(part)
    return out


def _sim_config(cfg: Config, which: str, seed: int, c: int | None, fraction: float = 1.0) -> SimulationConfig:
    return SimulationConfig.preset(
        which,
        cutoff_c=int(c if c is not None else cfg.get("simulation.c")),
        synthetic_query_sample_size=cfg.get("simulation.synthetic_query_sample_size"),
        click_fraction=fraction,
        random_seed=seed,
    )


@main.command()
@click.option("--catalog", type=_PathIn, required=True)
@click.option("--log", type=_PathIn, required=True)
@click.option("--gen", type=_PathIn, default=None)
@click.option("--configs", default="1,2,3,4", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--c", "c", type=click.IntRange(min=1), default=None, help="Rank cutoff (default 100).")
@config_option
@out_option()
@click.pass_context
def simulate(ctx, catalog, log, gen, configs, seed, c, config, out):
    """Retrievability share per entity type for configurations 1-4."""
    started = _now()
    cfg = _config(config)
    which = _parse_configs(configs)
    if gen is None and any(w != "1" for w in which):
        raise UsageError("configurations 2-4 need --gen (a generated-queries table)")
    sim = _simulation(cfg, catalog, log, gen)
    reports = [sim.run(_sim_config(cfg, w, seed, c)) for w in which]
    out_p = _out_dir(out)
    write_share_csv(reports, out_p / "shares.csv")
    _write_wide_table(reports, out_p / "share_table.csv")
    write_entity_csv(reports, sim.catalog, out_p / "entity_r.csv")
    table_md = share_table_markdown(reports)
    (out_p / "share_table.md").write_text(table_md + "\n", encoding="utf-8")
    _write_manifest(ctx, out_p, ["shares.csv", "share_table.csv", "entity_r.csv", "share_table.md"], started)
    click.echo(table_md)


def _write_wide_table(reports, path: Path) -> None:
    import csv

    from .catalog import ENTITY_TYPES

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_id", *(t.value for t in ENTITY_TYPES), "query_set_size", "seed"])
        for rep in reports:
            w.writerow([rep.config.id.value, *(f"{rep.per_type_share[t]:.6f}" for t in ENTITY_TYPES),
                        rep.query_set_size, rep.config.random_seed])


@main.command()
@click.option("--catalog", type=_PathIn, required=True)
@click.option("--log", type=_PathIn, required=True)
@click.option("--gen", type=_PathIn, required=True)
@click.option("--fractions", default="0,0.25,0.5,0.75,1", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--c", "c", type=click.IntRange(min=1), default=None)
@config_option
@out_option()
@click.pass_context
def sweep(ctx, catalog, log, gen, fractions, seed, c, config, out):
    """Audiobook share under configuration 4 as the clicked fraction grows."""
    started = _now()
    cfg = _config(config)
    try:
        fr = [float(x) for x in fractions.split(",")]
    except ValueError:
        raise UsageError("--fractions takes comma-separated numbers") from None
    if fr != sorted(fr) or any(not 0 <= f <= 1 for f in fr):
        raise UsageError("--fractions must be ascending values in [0, 1]")
    sim = _simulation(cfg, catalog, log, gen)
    points = sim.sweep(fr, _sim_config(cfg, "4", seed, c))
    out_p = _out_dir(out)
    write_sweep_csv(points, out_p / "sweep.csv")
    _write_manifest(ctx, out_p, ["sweep.csv"], started)
    click.echo((out_p / "sweep.csv").read_text(encoding="utf-8"), nl=False)


@main.command()
@click.option("--catalog", type=_PathIn, required=True)
@click.option("--gen", type=_PathIn, required=True)
@click.option("--llm", is_flag=True, help="Judge with the configured LLM endpoint.")
@config_option
@out_option()
@click.pass_context
def judge(ctx, catalog, gen, llm, config, out):
    """Judge generated queries on quality, relevancy, broadness and diversity."""
    started = _now()
    cfg = _config(config)
    cat = _load_catalog_or_fail(catalog)
    table = GenerationTable.load(gen)
    rules = JudgeRules.from_mapping(cfg.section("judge"))
    records = [r for r in table.records().values() if r.entity_id in cat]
    if llm:
        from .llm_client import LlmClient, LlmError, LlmSettings

        try:
            client = LlmClient(LlmSettings.from_mapping(cfg.section("llm")))
            verdicts, diversity = llm_judge_records(records, cat, client, rules)
        except LlmError as exc:
            raise click.ClickException(str(exc)) from None
    else:
        verdicts, diversity = judge_records(records, cat, rules, corpus_vocabulary(cat, rules))
    summary = summarize(verdicts, diversity)
    out_p = _out_dir(out)
    write_verdicts_csv(verdicts, out_p / "verdicts.csv")
    text = json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"
    (out_p / "summary.json").write_text(text, encoding="utf-8")
    _write_manifest(ctx, out_p, ["verdicts.csv", "summary.json"], started)
    click.echo(text, nl=False)


# --- serving and replay -----------------------------------------------------

@main.command()
@click.option("--index-dir", type=_DirIn, default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@config_option
def serve(index_dir, host, port, config):
    """Serve /suggest and /search over pre-built indexes."""
    cfg = _config(config)
    index_dir = index_dir or cfg.get("service.index_paths")
    state = ServiceState(Snapshot(K=int(cfg.get("qac.K")), N=int(cfg.get("qac.N")),
                                  weights=_weights(cfg, None)))
    if index_dir:
        state.reload(index_dir)
    service = SearchService(state, host or cfg.get("service.host"), int(port or cfg.get("service.port")))
    click.echo(f"serving on {service.url}", err=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.httpd.server_close()


@main.command()
@click.argument("manifest", type=_PathIn)
@out_option()
def replay(manifest, out):
    """Re-run the command recorded in MANIFEST, writing to --out."""
    data = json.loads(Path(manifest).read_text(encoding="utf-8"))
    argv = list(data["argv"]) + ["--out", out]
    main.main(args=argv, prog_name="synthq", standalone_mode=False)


if __name__ == "__main__":  # pragma: no cover
    main()

"""Pipeline front-end: one subcommand per stage, driven by a JSON config.

Every stage's randomness flows from the single config seed through fixed
per-stage offsets, so a run is reproducible from one knob. Exit codes:
0 ok, 1 usage, 2 data error, 3 embedding service unreachable.
"""

from __future__ import annotations

import argparse
import base64
import copy
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import requests

from . import annotation, datagen, detect, evaluation, ingest, media_stats, scoring, synth
from .errors import CongruityError, CorpusError, TransportError
from .store import EmbeddingClient, EmbeddingStore, read_store, write_store

ENV_PREFIX = "CONGRUITY_"

# Fixed fan-out of the single pipeline seed; the generate stage adds the
# pool index (train 0, validation 1, test 2) on top.
STAGE_SEED_OFFSETS = {"synth": 0, "split": 1, "generate": 2, "train": 5}

DEFAULT_CONFIG: dict = {
    "corpus_path": None,
    "embedding_store_path": None,
    "embedding_service_url": None,
    "keyword_list": list(ingest.COVID_KEYWORDS),
    "seed": 0,
    "output_dir": "out",
    "generation": {
        "congruent_quantile": 0.75,
        "pool_fractions": [0.80, 0.10, 0.10],
        "pool_counts": None,
    },
    "train": {
        "learning_rate": 0.001,
        "batch_size": 128,
        "weight_decay": 0.01,
        "grad_clip_norm": 1.0,
        "max_epochs": 100,
        "early_stop_patience": 5,
        "hidden_dims": [512, 128],
    },
}


def stage_seed(seed: int, stage: str, offset: int = 0) -> int:
    return (seed + STAGE_SEED_OFFSETS[stage] + offset) % 2**64


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _apply_env(config: dict, environ=None) -> dict:
    """Overlay CONGRUITY_* environment variables; "__" nests keys.

    Values are parsed as JSON when possible, else taken as strings, so
    CONGRUITY_SEED=7 and CONGRUITY_TRAIN__LEARNING_RATE=0.01 both work.
    """
    environ = os.environ if environ is None else environ
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX) :].lower().split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = config
        for part in path[:-1]:
            target = target.setdefault(part, {})
        target[path[-1]] = value
    return config


def load_config(path: str | None, environ=None) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            file_config = json.load(fh)
        if not isinstance(file_config, dict):
            raise CongruityError(f"{path}: config must be a JSON object")
        config = _deep_merge(config, file_config)
    return _apply_env(config, environ)


def _generation_config(config: dict, seed: int) -> datagen.GenerationConfig:
    gen = config["generation"]
    counts = gen.get("pool_counts")
    return datagen.GenerationConfig(
        congruent_quantile=gen["congruent_quantile"],
        pool_fractions=tuple(gen["pool_fractions"]),
        seed=seed,
        pool_counts=tuple(counts) if counts else None,
    )


def _train_config(config: dict, seed: int) -> detect.TrainConfig:
    t = config["train"]
    return detect.TrainConfig(
        learning_rate=t["learning_rate"],
        batch_size=t["batch_size"],
        weight_decay=t["weight_decay"],
        grad_clip_norm=t["grad_clip_norm"],
        max_epochs=t["max_epochs"],
        early_stop_patience=t["early_stop_patience"],
        seed=seed,
        hidden_dims=tuple(t["hidden_dims"]),
    )


def _write_json(payload, path: str | Path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", "utf-8")


def _write_jsonl(rows, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CongruityError(f"{path}: line {lineno}: malformed JSON: {exc}") from None
    return rows


def _load_samples(path: str | Path) -> list[datagen.PairSample]:
    return [datagen.PairSample(**row) for row in _read_jsonl(path)]


def _pair_score(title_record_id: str, image_record_id: str, store: EmbeddingStore) -> float:
    return scoring.clip_score(
        store.get(scoring.title_key(title_record_id)),
        store.get(scoring.thumb_key(image_record_id)),
    )


def _load_model(path: str | Path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == detect.MODEL_MAGIC:
        model, _ = detect.load_mlp(path)
        return model
    return detect.load_threshold(path)


def _predict(
    model, title_record_id: str, image_record_id: str, store: EmbeddingStore
) -> tuple[str, float]:
    if isinstance(model, detect.ThresholdModel):
        return detect.threshold_predict(model, _pair_score(title_record_id, image_record_id, store))
    prob = detect.mlp_forward(
        model,
        store.get(scoring.title_key(title_record_id)),
        store.get(scoring.thumb_key(image_record_id)),
    )
    label = datagen.INCONGRUENT if prob >= 0.5 else datagen.CONGRUENT
    return label, prob


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, config) -> int:
    seed = stage_seed(args.seed if args.seed is not None else config["seed"], "synth")
    records, store = synth.synth_corpus(
        n_per_class=args.n, dim=args.dim, noise_sigma=args.sigma, seed=seed, n_media=args.media
    )
    out = Path(args.output or config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    if args.thumbnails:
        paths = synth.write_thumbnails(records, out / "thumbnails", seed=seed)
        records = [replace(r, thumbnail_path=paths[r.id]) for r in records]
    ingest.save_corpus(records, out / "corpus.jsonl")
    write_store(store, out / "embeddings.emb")
    print(f"wrote {len(records)} records to {out / 'corpus.jsonl'} and {out / 'embeddings.emb'}")
    return 0


def cmd_extract_meta(args, config) -> int:
    records = ingest.load_corpus(args.corpus or config["corpus_path"])
    html_dir = Path(args.html_dir)
    updated = []
    filled = 0
    for record in records:
        if record.thumbnail_url is None:
            page = html_dir / f"{record.id}.html"
            if page.exists():
                url = ingest.extract_thumbnail_url(page.read_text("utf-8", errors="replace"))
                if url is not None:
                    record = replace(record, thumbnail_url=url)
                    filled += 1
        updated.append(record)
    ingest.save_corpus(updated, args.output)
    print(f"filled thumbnail_url for {filled} of {len(records)} records -> {args.output}")
    return 0


def cmd_filter(args, config) -> int:
    records = ingest.load_corpus(args.corpus or config["corpus_path"])
    keywords = args.keywords.split(",") if args.keywords else config["keyword_list"]
    corpus_filter = ingest.CorpusFilter(
        keyword_list=tuple(keywords), require_no_face=args.require_no_face
    )
    kept = ingest.apply_filters(records, corpus_filter)
    ingest.save_corpus(kept, args.output)
    print(f"kept {len(kept)} of {len(records)} records -> {args.output}")
    return 0


def cmd_embed(args, config) -> int:
    records = ingest.load_corpus(args.corpus or config["corpus_path"])
    url = args.service_url or config["embedding_service_url"]
    if not url:
        raise CongruityError("no embedding service URL configured")
    client = EmbeddingClient(url, batch_size=args.batch_size)
    info = client.health()

    image_bytes: list[bytes] = []
    unusable: list[str] = []
    fetch_dir = Path(args.fetch_missing) if args.fetch_missing else None
    for record in records:
        path = Path(record.thumbnail_path) if record.thumbnail_path else None
        if (path is None or not path.exists()) and record.thumbnail_url and fetch_dir:
            path = _fetch_thumbnail(record, fetch_dir)
        if path is None or not path.exists():
            unusable.append(record.id)
        else:
            image_bytes.append(path.read_bytes())
    if unusable:
        raise CorpusError(
            f"{len(unusable)} records lack a readable thumbnail: "
            + ", ".join(unusable[:10])
        )

    store = EmbeddingStore(info.dim)
    texts = client.fetch_text_embeddings([r.title for r in records])
    images = client.fetch_image_embeddings(
        [base64.b64encode(b).decode("ascii") for b in image_bytes]
    )
    for record, text_vec, image_vec in zip(records, texts, images):
        store.add(scoring.title_key(record.id), text_vec)
        store.add(scoring.thumb_key(record.id), image_vec)
    write_store(store, args.output)
    print(f"embedded {len(records)} records with {info.model} (dim {info.dim}) -> {args.output}")
    return 0


def _fetch_thumbnail(record: ingest.ArticleRecord, fetch_dir: Path) -> Path:
    fetch_dir.mkdir(parents=True, exist_ok=True)
    target = fetch_dir / record.id
    if not target.exists():
        try:
            resp = requests.get(record.thumbnail_url, timeout=30)
            resp.raise_for_status()
        except requests.RequestException:
            return target  # caller treats a missing file as unusable
        target.write_bytes(resp.content)
    return target


def cmd_score(args, config) -> int:
    records = ingest.load_corpus(args.corpus or config["corpus_path"])
    store = read_store(args.store or config["embedding_store_path"])
    scored = scoring.score_corpus(records, store)
    _write_jsonl((asdict(pair) for pair in scored), args.output)
    print(f"scored {len(scored)} records -> {args.output}")
    return 0


def cmd_stats(args, config) -> int:
    rows = _read_jsonl(args.scores)
    general = [r["score"] for r in rows if r["media_label"] == "general"]
    fake = [r["score"] for r in rows if r["media_label"] == "fake"]
    comparison = media_stats.two_sample_t(general, fake, "general", "fake")
    cdf_general = media_stats.empirical_cdf(general)
    cdf_fake = media_stats.empirical_cdf(fake)
    report = {
        "comparison": asdict(comparison),
        "cdf_general": asdict(cdf_general),
        "cdf_fake": asdict(cdf_fake),
    }
    _write_json(report, args.output)
    if args.cdf_csv:
        with open(args.cdf_csv, "w", encoding="utf-8") as fh:
            fh.write("group,threshold,cumulative_prob\n")
            for name, cdf in (("general", cdf_general), ("fake", cdf_fake)):
                for x, p in zip(cdf.thresholds, cdf.cumulative_probs):
                    fh.write(f"{name},{x!r},{p!r}\n")
    print(
        f"t={comparison.t_statistic:.4f} df={comparison.degrees_freedom:.1f} "
        f"p={comparison.p_value:.3g} d={comparison.cohens_d:.4f} -> {args.output}"
    )
    return 0


def cmd_split(args, config) -> int:
    rows = _read_jsonl(args.scores)
    scored = [scoring.ScoredPair(**row) for row in rows if row["media_label"] == "general"]
    seed = stage_seed(args.seed if args.seed is not None else config["seed"], "split")
    gen_config = _generation_config(config, seed)
    if args.quantile is not None:
        gen_config = replace(gen_config, congruent_quantile=args.quantile)
    if args.counts:
        counts = tuple(int(c) for c in args.counts.split(","))
        gen_config = replace(gen_config, pool_counts=counts)
    selected = datagen.select_congruent(scored, gen_config)
    train, validation, test = datagen.split_pools(selected, gen_config)
    _write_json({"train": train, "validation": validation, "test": test}, args.output)
    print(f"pools: train={len(train)} validation={len(validation)} test={len(test)} -> {args.output}")
    return 0


def cmd_gen_pairs(args, config) -> int:
    pools = json.loads(Path(args.pools).read_text("utf-8"))
    records = {r.id: r for r in ingest.load_corpus(args.corpus or config["corpus_path"])}
    base = args.seed if args.seed is not None else config["seed"]
    samples: list[datagen.PairSample] = []
    for offset, pool in enumerate(datagen.POOLS):
        pool_samples = datagen.generate_samples(
            pools[pool], records, seed=stage_seed(base, "generate", offset), pool=pool
        )
        samples.extend(pool_samples)
    _write_jsonl((asdict(s) for s in samples), args.output)
    print(f"generated {len(samples)} samples -> {args.output}")
    return 0


def cmd_derive_threshold(args, config) -> int:
    samples = [s for s in _load_samples(args.samples) if s.pool == args.pool]
    if not samples:
        raise CongruityError(f"no samples in pool {args.pool!r}")
    store = read_store(args.store or config["embedding_store_path"])
    scored = [(_pair_score(s.title_record_id, s.image_record_id, store), s.label) for s in samples]
    model = detect.derive_threshold(scored)
    detect.save_threshold(model, args.output)
    print(f"threshold {model.threshold:.6f} from {len(samples)} {args.pool} samples -> {args.output}")
    return 0


def cmd_train(args, config) -> int:
    samples = _load_samples(args.samples)
    train_split = [s for s in samples if s.pool == "train"]
    val_split = [s for s in samples if s.pool == "validation"]
    store = read_store(args.store or config["embedding_store_path"])
    seed = stage_seed(args.seed if args.seed is not None else config["seed"], "train")
    train_config = _train_config(config, seed)
    if args.max_epochs is not None:
        train_config = replace(train_config, max_epochs=args.max_epochs)
    if args.hidden_dims:
        dims = tuple(int(d) for d in args.hidden_dims.split(","))
        train_config = replace(train_config, hidden_dims=dims)
    model, log = detect.train_mlp(train_split, val_split, store, train_config)
    detect.save_mlp(model, args.output, train_config)
    if args.log:
        _write_json(
            {
                "best_epoch": log.best_epoch,
                "stopped_early": log.stopped_early,
                "epochs": [asdict(e) for e in log.epochs],
            },
            args.log,
        )
    best = log.epochs[log.best_epoch - 1]
    print(
        f"trained {len(log.epochs)} epochs (best {log.best_epoch}, "
        f"val loss {best.validation_loss:.5f}) -> {args.output}"
    )
    return 0


def cmd_evaluate(args, config) -> int:
    samples = [s for s in _load_samples(args.samples) if s.pool == args.pool]
    if not samples:
        raise CongruityError(f"no samples in pool {args.pool!r}")
    store = read_store(args.store or config["embedding_store_path"])
    model = _load_model(args.model)
    predictions = []
    scored = []
    for sample in samples:
        label, prediction_score = _predict(
            model, sample.title_record_id, sample.image_record_id, store
        )
        predictions.append((label, sample.label))
        scored.append((prediction_score, sample.label))
    report = evaluation.EvalReport(
        split_name=args.pool,
        n=len(samples),
        accuracy=evaluation.accuracy(predictions),
        auroc=evaluation.auroc(scored),
    )
    _write_json(asdict(report), args.output)
    print(f"{args.pool}: n={report.n} accuracy={report.accuracy:.4f} auroc={report.auroc:.4f}")
    return 0


def cmd_rank(args, config) -> int:
    records = ingest.load_corpus(args.corpus or config["corpus_path"])
    store = read_store(args.store or config["embedding_store_path"])
    model = _load_model(args.model)
    scored = []
    for record in records:
        _, prediction_score = _predict(model, record.id, record.id, store)
        scored.append((record.id, prediction_score))
    ranked = evaluation.rank_articles(scored)
    _write_jsonl(
        ({"record_id": rid, "prediction_score": score} for rid, score in ranked), args.output
    )
    print(f"ranked {len(ranked)} records -> {args.output}")
    return 0


def cmd_serve(args, config) -> int:
    import uvicorn

    ranked = [(r["record_id"], r["prediction_score"]) for r in _read_jsonl(args.ranked)]
    corpus = {r.id: r for r in ingest.load_corpus(args.corpus or config["corpus_path"])}
    queue = annotation.build_queue(ranked, corpus)
    service = annotation.AnnotationService(queue, annotation.LabelLog(args.labels))
    thumbnails = {
        rid: corpus[rid].thumbnail_path for rid, _ in ranked if corpus[rid].thumbnail_path
    }
    app = annotation.create_app(service, thumbnail_paths=thumbnails, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Argparse that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="congruity", description=__doc__)
    parser.add_argument("--config", help="pipeline config JSON file")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic corpus and embedding store")
    p.add_argument("--n", type=int, required=True, help="number of congruent source records")
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--media", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="output directory")
    p.add_argument("--thumbnails", action="store_true", help="also write PNG thumbnails")

    p = add("extract-meta", cmd_extract_meta, "fill thumbnail URLs from saved article HTML")
    p.add_argument("--corpus")
    p.add_argument("--html-dir", required=True)
    p.add_argument("--output", required=True)

    p = add("filter", cmd_filter, "apply keyword and face filters to a corpus")
    p.add_argument("--corpus")
    p.add_argument("--keywords", help="comma-separated keywords (default: config list)")
    p.add_argument("--require-no-face", action="store_true")
    p.add_argument("--output", required=True)

    p = add("embed", cmd_embed, "fetch embeddings from the sidecar service")
    p.add_argument("--corpus")
    p.add_argument("--service-url")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--fetch-missing", help="directory for downloading missing thumbnails")
    p.add_argument("--output", required=True)

    p = add("score", cmd_score, "score every record's title against its thumbnail")
    p.add_argument("--corpus")
    p.add_argument("--store")
    p.add_argument("--output", required=True)

    p = add("stats", cmd_stats, "compare general vs fake score distributions")
    p.add_argument("--scores", required=True)
    p.add_argument("--cdf-csv", help="also write CDF points as CSV")
    p.add_argument("--output", required=True)

    p = add("split", cmd_split, "select congruent pairs and split into pools")
    p.add_argument("--scores", required=True)
    p.add_argument("--quantile", type=float)
    p.add_argument("--counts", help="exact pool sizes, e.g. 6575,824,824")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", required=True)

    p = add("gen-pairs", cmd_gen_pairs, "generate labeled congruent/incongruent samples")
    p.add_argument("--pools", required=True)
    p.add_argument("--corpus")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", required=True)

    p = add("derive-threshold", cmd_derive_threshold, "derive the zero-shot decision threshold")
    p.add_argument("--samples", required=True)
    p.add_argument("--store")
    p.add_argument("--pool", default="validation", choices=datagen.POOLS)
    p.add_argument("--output", required=True)

    p = add("train", cmd_train, "train the embedding-pair classifier")
    p.add_argument("--samples", required=True)
    p.add_argument("--store")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--hidden-dims", help="comma-separated hidden layer sizes")
    p.add_argument("--log", help="write per-epoch losses as JSON")
    p.add_argument("--output", required=True)

    p = add("evaluate", cmd_evaluate, "evaluate a model on one pool")
    p.add_argument("--samples", required=True)
    p.add_argument("--store")
    p.add_argument("--model", required=True)
    p.add_argument("--pool", default="test", choices=datagen.POOLS)
    p.add_argument("--output", required=True)

    p = add("rank", cmd_rank, "rank corpus records by predicted incongruity")
    p.add_argument("--corpus")
    p.add_argument("--store")
    p.add_argument("--model", required=True)
    p.add_argument("--output", required=True)

    p = add("serve", cmd_serve, "run the annotation service")
    p.add_argument("--ranked", required=True)
    p.add_argument("--corpus")
    p.add_argument("--labels", required=True, help="append-only label log path")
    p.add_argument("--static", help="directory of UI assets to serve at /")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except TransportError as exc:
        print(f"congruity: service unreachable: {exc}", file=sys.stderr)
        return 3
    except (CongruityError, ValueError, KeyError, OSError) as exc:
        print(f"congruity: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

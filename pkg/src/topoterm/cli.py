"""Pipeline orchestration: ingest, features, train, tag, eval, report, oracle-check.

Stages are idempotent: each one records a content hash of its inputs and
configuration, and a re-run with unchanged hashes is a cache hit.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import evaluation, features, mlm, oracles, persistence, tagger
from .corpus import TermSet, bio_labels, extract_gold_terms, load_corpus
from .embeddings import EmbeddingMatrix, load_embeddings

log = logging.getLogger("topoterm")

STAGES = ("ingest", "features", "train", "tag", "eval", "report", "oracle-check")


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    train_corpus: str
    test_corpus: str
    embeddings: str
    cache_dir: str
    output_dir: str
    val_corpus: str | None = None
    oov_embeddings: str | None = None
    mlm_probabilities: str | None = None
    contextual_embeddings: str | None = None
    neighborhood_n: int = 50
    max_filtration: float = 1.0
    kinds: list[str] = field(default_factory=lambda: ["mlm", "pimage", "codensity", "wasserstein"])
    training: tagger.TrainingConfig = field(default_factory=tagger.TrainingConfig)
    seed: int = 0
    deterministic: bool = False
    jobs: int = 1
    val_fraction: float = 0.1

    def validate(self) -> None:
        if self.neighborhood_n < 41:
            raise PipelineError("neighborhood n must be >= 41 (largest codensity k + 1)")
        for name in (
            "train_corpus",
            "test_corpus",
            "embeddings",
            "val_corpus",
            "oov_embeddings",
            "mlm_probabilities",
            "contextual_embeddings",
        ):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise PipelineError(f"{name} path does not exist: {path}")
        for kind in self.kinds:
            if kind not in tagger.FEATURE_KINDS:
                raise PipelineError(f"unknown model kind {kind!r}")

    @property
    def input_paths(self) -> list[str]:
        return [
            p
            for p in (
                self.train_corpus,
                self.val_corpus,
                self.test_corpus,
                self.embeddings,
                self.oov_embeddings,
                self.mlm_probabilities,
                self.contextual_embeddings,
            )
            if p is not None
        ]


def _parse_config_text(text: str) -> dict:
    """Minimal TOML-subset parser: [section] headers and JSON-style values."""
    root: dict = {}
    current = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = root
            for part in line[1:-1].strip().split("."):
                current = current.setdefault(part.strip(), {})
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise PipelineError(f"config line {lineno}: expected key = value")
        value = value.strip()
        # strip trailing comment outside of quotes/brackets
        depth, in_str = 0, False
        for i, ch in enumerate(value):
            if ch == '"':
                in_str = not in_str
            elif ch in "[{" and not in_str:
                depth += 1
            elif ch in "]}" and not in_str:
                depth -= 1
            elif ch == "#" and not in_str and depth == 0:
                value = value[:i].rstrip()
                break
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            raise PipelineError(f"config line {lineno}: cannot parse value {value!r}") from None
        current[key.strip()] = parsed
    return root


def load_config(path) -> PipelineConfig:
    doc = _parse_config_text(Path(path).read_text(encoding="utf-8"))
    paths = doc.get("paths", {})
    nb = doc.get("neighborhood", {})
    models = doc.get("models", {})
    training = doc.get("training", {})
    cfg = PipelineConfig(
        train_corpus=paths["train_corpus"],
        test_corpus=paths["test_corpus"],
        embeddings=paths["embeddings"],
        cache_dir=paths.get("cache_dir", "cache"),
        output_dir=paths.get("output_dir", "output"),
        val_corpus=paths.get("val_corpus"),
        oov_embeddings=paths.get("oov_embeddings"),
        mlm_probabilities=paths.get("mlm_probabilities"),
        contextual_embeddings=paths.get("contextual_embeddings"),
        neighborhood_n=int(nb.get("n", 50)),
        max_filtration=float(nb.get("max_filtration", 1.0)),
        kinds=list(models.get("kinds", ["mlm", "pimage", "codensity", "wasserstein"])),
        training=tagger.TrainingConfig(
            learning_rate=float(training.get("learning_rate", 4e-5)),
            warmup_fraction=float(training.get("warmup_fraction", 0.10)),
            epochs=int(training.get("epochs", 15)),
            early_stop_delta=float(training.get("early_stop_delta", 0.005)),
            batch_size=int(training.get("batch_size", 128)),
            weight_decay=float(training.get("weight_decay", 0.01)),
        ),
        seed=int(doc.get("seed", 0)),
        deterministic=bool(doc.get("deterministic", False)),
        jobs=int(doc.get("jobs", 1)),
        val_fraction=float(doc.get("val_fraction", 0.1)),
    )
    env_cache = os.environ.get("TOPOTERM_CACHE_DIR")
    if env_cache:
        cfg.cache_dir = env_cache
    return cfg


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage_hash(cfg: PipelineConfig, stage: str, paths: list[str], extra: dict) -> str:
    payload = {
        "stage": stage,
        "inputs": {p: _file_hash(p) for p in sorted(paths)},
        "config": extra,
        "seed": cfg.seed,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _stamp_path(cfg: PipelineConfig, stage: str) -> Path:
    return Path(cfg.cache_dir) / f"{stage}.stamp"


def _stamp_hit(cfg: PipelineConfig, stage: str, digest: str, force: bool) -> bool:
    stamp = _stamp_path(cfg, stage)
    if not force and stamp.exists() and stamp.read_text().strip() == digest:
        log.info("%s: cache hit, skipping", stage)
        return True
    return False


def _write_stamp(cfg: PipelineConfig, stage: str, digest: str) -> None:
    _stamp_path(cfg, stage).write_text(digest + "\n")


def _ensure_dirs(cfg: PipelineConfig) -> None:
    Path(cfg.cache_dir).mkdir(parents=True, exist_ok=True)
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)


def _write_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _corpora(cfg: PipelineConfig) -> dict[str, list]:
    out = {"train": load_corpus(cfg.train_corpus), "test": load_corpus(cfg.test_corpus)}
    if cfg.val_corpus:
        out["val"] = load_corpus(cfg.val_corpus)
    return out


def stage_ingest(cfg: PipelineConfig, force: bool = False) -> None:
    _ensure_dirs(cfg)
    paths = [p for p in (cfg.train_corpus, cfg.val_corpus, cfg.test_corpus) if p]
    digest = _stage_hash(cfg, "ingest", paths, {})
    if _stamp_hit(cfg, "ingest", digest, force):
        return
    corpora = _corpora(cfg)
    out = Path(cfg.output_dir)
    summary = {}
    for split, utts in corpora.items():
        gold = extract_gold_terms(utts, user_only=True)
        _write_json(out / f"gold_{split}.json", gold.to_json())
        summary[split] = {
            "utterances": len(utts),
            "user_utterances": sum(1 for u in utts if u.speaker == "user"),
            "gold_terms": len(gold),
        }
    _write_json(out / "ingest_summary.json", summary)
    _write_stamp(cfg, "ingest", digest)


def _unique_user_tokens(corpora: dict[str, list]) -> list[str]:
    words: set[str] = set()
    for utts in corpora.values():
        for u in utts:
            if u.speaker == "user":
                words.update(u.tokens)
    return sorted(words)


def stage_features(cfg: PipelineConfig, force: bool = False) -> None:
    _ensure_dirs(cfg)
    paths = [p for p in (cfg.train_corpus, cfg.val_corpus, cfg.test_corpus, cfg.embeddings) if p]
    if cfg.oov_embeddings:
        paths.append(cfg.oov_embeddings)
    if cfg.mlm_probabilities:
        paths.append(cfg.mlm_probabilities)
    extra = {"n": cfg.neighborhood_n, "max_filtration": cfg.max_filtration}
    digest = _stage_hash(cfg, "features", paths, extra)
    if _stamp_hit(cfg, "features", digest, force):
        return

    cache_dir = Path(cfg.cache_dir)
    feat_path = cache_dir / "features.jsonl"
    diag_path = cache_dir / "diagrams.jsonl"
    records = features.load_feature_cache(feat_path) if feat_path.exists() else {}
    diagrams = persistence.load_diagrams(diag_path) if diag_path.exists() else {}

    matrix = load_embeddings(cfg.embeddings)
    aux = load_embeddings(cfg.oov_embeddings) if cfg.oov_embeddings else None
    words = _unique_user_tokens(_corpora(cfg))

    missing: list[str] = []
    computed = 0
    for word in words:
        if word in records:
            continue
        if word not in matrix and (aux is None or word not in aux):
            missing.append(word)
            continue
        record, diagram = features.compute_word_features(
            word, matrix, aux=aux, n=cfg.neighborhood_n, max_filtration=cfg.max_filtration
        )
        records[word] = record
        diagrams[word] = diagram
        computed += 1
    features.save_feature_cache(feat_path, records)
    persistence.save_diagrams(diag_path, diagrams)
    (cache_dir / "missing_words.txt").write_text(
        "".join(w + "\n" for w in missing), encoding="utf-8"
    )
    if missing:
        log.warning("%d corpus words have no embedding; zero features substituted", len(missing))

    if cfg.mlm_probabilities:
        table = mlm.aggregate_mlm_scores(mlm.iter_probability_records(cfg.mlm_probabilities))
        mlm.save_score_table(cache_dir / "mlm_scores.tsv", table)

    log.info("features: %d cached words (%d newly computed)", len(records), computed)
    _write_stamp(cfg, "features", digest)


def _load_feature_inputs(cfg: PipelineConfig):
    cache_dir = Path(cfg.cache_dir)
    feat_path = cache_dir / "features.jsonl"
    if not feat_path.exists():
        raise PipelineError(f"missing feature cache {feat_path}; run the features stage first")
    cache = features.load_feature_cache(feat_path)
    score_path = cache_dir / "mlm_scores.tsv"
    table = mlm.load_score_table(score_path) if score_path.exists() else mlm.MlmScoreTable({}, {})
    contextual = (
        features.read_contextual_embeddings(cfg.contextual_embeddings)
        if cfg.contextual_embeddings
        else None
    )
    return cache, table, contextual


def _dataset_pairs(utts, kind, cache, table, contextual):
    pairs = []
    for u in utts:
        if u.speaker != "user":
            continue
        ctx = None
        if kind == "contextual":
            if contextual is None or u.utt_id not in contextual:
                raise PipelineError(f"no contextual embeddings for utterance {u.utt_id}")
            ctx = contextual[u.utt_id]
        feats = features.assemble_features(u, cache, mlm_table=table, contextual=ctx)
        pairs.append((feats, bio_labels(u)))
    return pairs


def stage_train(cfg: PipelineConfig, force: bool = False) -> None:
    _ensure_dirs(cfg)
    if cfg.deterministic:
        tagger.set_deterministic()
    cache, table, contextual = _load_feature_inputs(cfg)
    paths = [p for p in (cfg.train_corpus, cfg.val_corpus) if p]
    paths.append(str(Path(cfg.cache_dir) / "features.jsonl"))
    extra = {
        "kinds": cfg.kinds,
        "training": dict(cfg.training.__dict__),
        "val_fraction": cfg.val_fraction,
    }
    digest = _stage_hash(cfg, "train", paths, extra)
    if _stamp_hit(cfg, "train", digest, force):
        return

    train_utts = load_corpus(cfg.train_corpus)
    val_utts = load_corpus(cfg.val_corpus) if cfg.val_corpus else None

    out = Path(cfg.output_dir)
    for kind in cfg.kinds:
        pairs = _dataset_pairs(train_utts, kind, cache, table, contextual)
        if val_utts is not None:
            val_pairs = _dataset_pairs(val_utts, kind, cache, table, contextual)
        else:
            # deterministic tail split
            cut = max(1, int(len(pairs) * (1.0 - cfg.val_fraction)))
            pairs, val_pairs = pairs[:cut], pairs[cut:]
        mcfg = tagger.ModelConfig(feature_kind=kind)
        model = tagger.build_model(mcfg, cfg.seed)
        train_set = tagger.build_dataset(pairs, kind, mcfg.max_seq_len)
        val_set = tagger.build_dataset(val_pairs, kind, mcfg.max_seq_len) if val_pairs else None
        model, history = tagger.train(model, train_set, val_set, cfg.training)
        tagger.save_checkpoint(out / f"model_{kind}.ckpt", model, history)
        log.info(
            "train[%s]: %d epochs, final train loss %.4f",
            kind,
            history.stopped_epoch,
            history.train_losses[-1] if history.train_losses else float("nan"),
        )
    _write_stamp(cfg, "train", digest)


def stage_tag(cfg: PipelineConfig, force: bool = False) -> None:
    _ensure_dirs(cfg)
    if cfg.deterministic:
        tagger.set_deterministic()
    cache, table, contextual = _load_feature_inputs(cfg)
    out = Path(cfg.output_dir)
    ckpts = {}
    for kind in cfg.kinds:
        path = out / f"model_{kind}.ckpt"
        if not path.exists():
            raise PipelineError(f"missing checkpoint {path}; run the train stage first")
        ckpts[kind] = path
    paths = [cfg.test_corpus] + [str(p) for p in ckpts.values()]
    digest = _stage_hash(cfg, "tag", paths, {"kinds": cfg.kinds})
    if _stamp_hit(cfg, "tag", digest, force):
        return

    test_utts = [u for u in load_corpus(cfg.test_corpus) if u.speaker == "user"]
    term_sets: dict[str, TermSet] = {}
    for kind in cfg.kinds:
        model, _ = tagger.load_checkpoint(ckpts[kind])
        preds = []
        terms = TermSet()
        span_count = 0
        for u in test_utts:
            ctx = contextual.get(u.utt_id) if (contextual and kind == "contextual") else None
            feats = features.assemble_features(u, cache, mlm_table=table, contextual=ctx)
            pred = tagger.tag(model, feats, utt_id=u.utt_id, model_id=kind)
            preds.append(pred)
            span_count += len(pred.spans)
            terms = terms.union(tagger.prediction_terms(pred, u.tokens))
        tagger.save_predictions(out / f"predictions_{kind}.jsonl", preds)
        doc = terms.to_json()
        doc["span_count"] = span_count
        _write_json(out / f"terms_{kind}.json", doc)
        term_sets[kind] = terms

    union = tagger.union_predictions(list(term_sets.values()))
    _write_json(out / "terms_union.json", union.to_json())
    tda_kinds = [k for k in cfg.kinds if k in ("pimage", "codensity", "wasserstein")]
    if tda_kinds:
        tda_union = tagger.union_predictions([term_sets[k] for k in tda_kinds])
        _write_json(out / "terms_tda.json", tda_union.to_json())
    _write_stamp(cfg, "tag", digest)


def _load_terms(path) -> TermSet:
    if not Path(path).exists():
        raise PipelineError(f"missing prediction file {path}; run the tag stage first")
    return TermSet.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def stage_eval(cfg: PipelineConfig, force: bool = False) -> None:
    _ensure_dirs(cfg)
    out = Path(cfg.output_dir)
    gold_path = out / "gold_test.json"
    if not gold_path.exists():
        raise PipelineError(f"missing {gold_path}; run the ingest stage first")
    gold = TermSet.from_json(json.loads(gold_path.read_text(encoding="utf-8")))
    train_gold = TermSet.from_json(
        json.loads((out / "gold_train.json").read_text(encoding="utf-8"))
    )

    model_terms = {kind: _load_terms(out / f"terms_{kind}.json") for kind in cfg.kinds}
    groups = dict(model_terms)
    groups["union"] = _load_terms(out / "terms_union.json")
    if (out / "terms_tda.json").exists():
        groups["tda"] = _load_terms(out / "terms_tda.json")

    report: dict = {"models": {}, "input_hashes": {}}
    for name, terms in groups.items():
        metrics = evaluation.evaluate(terms, gold)
        tp_set = TermSet()
        for t in terms.terms & gold.terms:
            tp_set.add(t)
        split = evaluation.seen_unseen_split(tp_set, train_gold)
        preds_path = out / f"predictions_{name}.jsonl"
        entry = metrics.to_json()
        entry["seen_fraction"] = None if split is None else split[0]
        entry["unseen_fraction"] = None if split is None else split[1]
        if name in cfg.kinds:
            terms_doc = json.loads((out / f"terms_{name}.json").read_text(encoding="utf-8"))
            entry["span_count"] = terms_doc.get("span_count")
            if preds_path.exists():
                preds = tagger.load_predictions(preds_path)
                gold_by_id = {
                    u.utt_id: bio_labels(u)
                    for u in load_corpus(cfg.test_corpus)
                    if u.speaker == "user"
                }
                l2 = [
                    tagger.uncertainty_l2(p.probs, gold_by_id[p.utt_id])
                    for p in preds
                    if p.utt_id in gold_by_id and len(p.tags) == len(gold_by_id[p.utt_id])
                ]
                entry["l2_uncertainty"] = float(np.mean(l2)) if l2 else None
        report["models"][name] = entry

    # per-domain recall for the union model
    breakdown = evaluation.per_domain_recall(groups["union"], gold)
    with open(out / "per_domain_recall.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["domain", "gold_count", "recall"])
        for domain in sorted(breakdown.recall_by_domain):
            writer.writerow(
                [
                    domain,
                    breakdown.gold_count_by_domain[domain],
                    repr(breakdown.recall_by_domain[domain]),
                ]
            )
    report["per_domain_recall"] = {
        d: breakdown.recall_by_domain[d] for d in sorted(breakdown.recall_by_domain)
    }

    if 2 <= len(model_terms) <= evaluation.MAX_OVERLAP_MODELS:
        overlap = evaluation.overlap_report(model_terms, gold)
        with open(out / "venn_regions.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["models", "size"])
            for owners in sorted(overlap.region_sizes, key=lambda s: (len(s), sorted(s))):
                writer.writerow(["+".join(sorted(owners)), overlap.region_sizes[owners]])
        report["overlap"] = {
            "+".join(sorted(owners)): size for owners, size in overlap.region_sizes.items()
        }

    for path in cfg.input_paths:
        report["input_hashes"][path] = _file_hash(path)
        manifest = Path(path + ".manifest.json")
        if manifest.exists():
            report["input_hashes"][str(manifest)] = _file_hash(manifest)

    _write_json(out / "report.json", report)
    lines = [f"{'model':<12} {'F1':>6} {'Rec':>6} {'Prec':>6} {'Tags':>6}"]
    for name in sorted(report["models"]):
        m = report["models"][name]
        lines.append(
            f"{name:<12} {m['f1']:>6.3f} {m['recall']:>6.3f} "
            f"{m['precision']:>6.3f} {m['predicted_count']:>6}"
        )
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def stage_report(cfg: PipelineConfig) -> None:
    path = Path(cfg.output_dir) / "report.txt"
    if not path.exists():
        raise PipelineError(f"missing {path}; run the eval stage first")
    sys.stdout.write(path.read_text(encoding="utf-8"))


def run_oracle_check(seed: int = 0) -> int:
    """Brute-force cross-check batteries; returns the number of mismatches."""
    rng = np.random.default_rng(seed)
    failures = 0

    for _ in range(200):
        n = int(rng.integers(3, 9))
        D = _random_distance_matrix(rng, n)
        fast = persistence.vr_persistence(D, max_filtration=1.0).sorted()
        slow = persistence.brute_force_persistence(D, max_filtration=1.0).sorted()
        if fast.h0 != slow.h0 or fast.h1 != slow.h1 or fast.essential_h0 != slow.essential_h0:
            failures += 1
        mst = oracles.prim_mst_weights(D.entries, 1.0)
        if [d for _, d in fast.h0] != mst:
            failures += 1

    for _ in range(100):
        pts = _random_diagram(rng, int(rng.integers(0, 6)))
        exact = features.wasserstein_distance(pts, [])
        brute = oracles.wasserstein_matching_bruteforce(pts, [])
        if abs(exact - brute) > 1e-9:
            failures += 1

    diag = persistence.PersistenceDiagram(
        h0=[(0.0, 0.4), (0.0, 0.7)], h1=[(0.3, 0.45), (0.6, 0.8)]
    )
    image = features.persistence_image(diag)
    quad = oracles.image_quadrature(
        np.asarray(diag.h1), (0.0, 1.0), features.H1_BIRTH_BINS, (0.0, 0.3), features.H1_LIFETIME_BINS
    )
    if not np.allclose(image.h1_grid, quad, rtol=1e-3, atol=1e-12):
        failures += 1

    return failures


def _random_distance_matrix(rng, n: int) -> persistence.DistanceMatrix:
    A = rng.uniform(0.0, 1.0, size=(n, n))
    A = (A + A.T) / 2.0
    np.fill_diagonal(A, 0.0)
    return persistence.DistanceMatrix(A)


def _random_diagram(rng, n: int) -> list[tuple[float, float]]:
    out = []
    for _ in range(n):
        b = float(rng.uniform(0.0, 0.8))
        out.append((b, b + float(rng.uniform(0.01, 0.2))))
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="topoterm", description=__doc__)
    parser.add_argument("stage", choices=STAGES)
    parser.add_argument("--config", type=str, help="pipeline config file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--deterministic", action="store_true")
    parser.add_argument("--jobs", type=int, default=None)
    parser.add_argument("--stage-force", action="store_true", help="ignore stage cache stamps")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if args.stage == "oracle-check":
        failures = run_oracle_check(seed=args.seed or 0)
        if failures:
            log.error("oracle-check: %d mismatches", failures)
            return 1
        log.info("oracle-check: all cross-checks passed")
        return 0

    if not args.config:
        parser.error(f"stage {args.stage} requires --config")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.deterministic:
            cfg.deterministic = True
        if args.jobs is not None:
            cfg.jobs = args.jobs
        cfg.validate()
        force = args.stage_force
        if args.stage == "ingest":
            stage_ingest(cfg, force)
        elif args.stage == "features":
            stage_features(cfg, force)
        elif args.stage == "train":
            stage_train(cfg, force)
        elif args.stage == "tag":
            stage_tag(cfg, force)
        elif args.stage == "eval":
            stage_eval(cfg, force)
        elif args.stage == "report":
            stage_report(cfg)
    except (PipelineError, corpus_mod.CorpusError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Command line for the export scripts.

    topoterm-export embeddings --vocab words.txt --out embeddings.tsv
    topoterm-export mlm        --corpus train.jsonl --out probs.jsonl
    topoterm-export contextual --corpus train.jsonl --out contextual.bin

A vocabulary file is one word per line; --model overrides the pinned default.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import backends, export

log = logging.getLogger(__name__)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="topoterm-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    emb = sub.add_parser("embeddings", help="vocabulary (or OOV) embedding TSV")
    emb.add_argument("--vocab", required=True)
    emb.add_argument("--out", required=True)
    emb.add_argument("--model", default=backends.DEFAULT_EMBEDDING_MODEL)
    emb.add_argument("--batch-size", type=int, default=256)

    mlm = sub.add_parser("mlm", help="masked-probability JSONL")
    mlm.add_argument("--corpus", required=True)
    mlm.add_argument("--out", required=True)
    mlm.add_argument("--model", default=backends.DEFAULT_MLM_MODEL)

    ctx = sub.add_parser("contextual", help="frozen per-token embedding binary")
    ctx.add_argument("--corpus", required=True)
    ctx.add_argument("--out", required=True)
    ctx.add_argument("--model", default=backends.DEFAULT_MLM_MODEL)

    for p in (emb, mlm, ctx):
        p.add_argument("--device", default="cpu")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "embeddings":
            backend = backends.SentenceEmbeddingBackend(args.model, device=args.device)
            export.export_vocab_embeddings(
                args.vocab, args.out, backend, batch_size=args.batch_size
            )
        elif args.command == "mlm":
            backend = backends.MaskedLmBackend(args.model, device=args.device)
            export.export_mlm_probabilities(args.corpus, args.out, backend)
        elif args.command == "contextual":
            backend = backends.ContextualEmbeddingBackend(args.model, device=args.device)
            export.export_contextual_embeddings(args.corpus, args.out, backend)
    except (backends.BackendError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

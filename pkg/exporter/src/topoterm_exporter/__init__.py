"""Batch export scripts that turn pretrained-model inference into flat files.

The main package (`topoterm`) deliberately contains no pretrained models; it
consumes three file formats that this package produces:

- vocabulary / OOV embedding TSVs (sentence-embedding model, 384-d),
- per-token masked-prediction probability JSONL (masked language model),
- frozen per-token contextual embedding binary (768-d encoder states).

Every export is written atomically and carries a JSON manifest sidecar
recording model identifiers and input-file hashes.
"""

__version__ = "0.1.0"

#!/usr/bin/env python3
"""Dump a handful of co-occurrence images from a corpus as PGM files
for eyeballing: botnet apps request more permissions, so their images
carry visibly more black cells.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from botgrid.dataset import extract_corpus, load_dataset_manifest  # noqa: E402
from botgrid.encoder import dump_pgm, encode  # noqa: E402
from botgrid.training import build_fold_vocabulary  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("manifest", help="dataset CSV (path,label,kind)")
    parser.add_argument("--out", default="sample_images", help="output directory")
    parser.add_argument("--per-class", type=int, default=4)
    parser.add_argument("--n", type=int, default=41, help="vocabulary size")
    args = parser.parse_args()

    records = load_dataset_manifest(args.manifest)
    corpus = extract_corpus(records)
    vocab = build_fold_vocabulary(corpus.perm_sets, corpus.labels, args.n)
    os.makedirs(args.out, exist_ok=True)

    taken = {"benign": 0, "botnet": 0}
    for perms, label in zip(corpus.perm_sets, corpus.labels):
        if taken[label] >= args.per_class:
            continue
        img = encode(perms, vocab)
        name = f"{label}_{taken[label]}.pgm"
        dump_pgm(img, os.path.join(args.out, name))
        print(f"{name}: {img.zero_count()} black cells of {img.n * img.n}")
        taken[label] += 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

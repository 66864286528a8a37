#!/usr/bin/env python3
"""Desk-scale experiment: synthesize a labeled corpus, run k-fold
cross-validation with the full architecture, and print the report.

The defaults finish in a couple of minutes on a laptop; crank the sizes
and epochs up for a longer run.
"""

import argparse
import os
import sys
import tempfile
import time

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from botgrid.synth import SynthSpec, generate_synthetic_corpus  # noqa: E402
from botgrid.training import TrainConfig, cross_validate, render_report  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=60, help="samples per class")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--k", type=int, default=5, help="folds")
    parser.add_argument("--noise", type=float, default=0.05)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=2)
    parser.add_argument("--keep", help="write the corpus here instead of a temp dir")
    args = parser.parse_args()

    spec = SynthSpec(
        n_botnet=args.samples,
        n_benign=args.samples,
        pool_size=48,
        botnet_signature_size=8,
        benign_signature_size=5,
        noise_rate=args.noise,
        seed=args.seed,
    )
    config = TrainConfig(
        epochs=args.epochs, k=args.k, seed=args.seed, vocab_size=41
    )

    def run(corpus_dir):
        records = generate_synthetic_corpus(spec, corpus_dir)
        print(f"generated {len(records)} samples in {corpus_dir}", file=sys.stderr)
        t0 = time.perf_counter()
        result = cross_validate(records, config, jobs=args.jobs)
        print(f"cross-validation took {time.perf_counter() - t0:.1f}s", file=sys.stderr)
        sys.stdout.write(render_report(result))

    if args.keep:
        run(args.keep)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            run(tmp)
    return 0


if __name__ == "__main__":
    sys.exit(main())

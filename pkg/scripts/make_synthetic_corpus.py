#!/usr/bin/env python3
"""Generate a self-contained demo corpus: trees, chains, oracle stub table.

Everything the CLI needs for an offline end-to-end run lands in one
directory:

    python scripts/make_synthetic_corpus.py --out-dir demo --n-trees 20
    chaineval evaluate --chains demo/chains.jsonl --stub-table demo/stub_table.json --out demo/scores.jsonl
    chaineval meta-eval --scores demo/scores.jsonl --chains demo/chains.jsonl --out demo/report.json
"""

import argparse
import json
from pathlib import Path

from chaineval.chains import save_chains
from chaineval.perturb import manifest_entry, save_trees
from chaineval.synthetic import build_corpus, build_oracle_table, default_paraphrase_lexicon


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="demo")
    parser.add_argument("--n-trees", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    corpus = build_corpus(n_trees=args.n_trees, seed=args.seed)
    table = build_oracle_table(corpus)

    save_trees(corpus.trees, out / "trees.json")
    save_chains(corpus.all_chains(), out / "chains.jsonl")
    table.dump(out / "stub_table.json")
    (out / "lexicon.json").write_text(json.dumps(default_paraphrase_lexicon(), indent=2))
    manifest = {"seed": args.seed, "records": [manifest_entry(r) for r in corpus.records]}
    (out / "chains.jsonl.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    print(f"wrote {len(corpus.trees)} trees, {len(corpus.all_chains())} chains to {out}/")


if __name__ == "__main__":
    main()

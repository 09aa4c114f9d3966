"""Write a 4-category 20 newsgroups subset as JSON lines for the acceptance runner.

    python tools/fetch_20ng.py OUT_DIR [--docs 2000]

Needs scikit-learn and network access.  Output: OUT_DIR/20ng.jsonl with
"id", "text" and "label" fields.
"""

import argparse
import json
import pathlib
import random

from sklearn.datasets import fetch_20newsgroups

CATEGORIES = ["comp.graphics", "rec.sport.hockey", "sci.med", "talk.politics.guns"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--docs", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    data = fetch_20newsgroups(subset="all", categories=CATEGORIES,
                              remove=("headers", "footers", "quotes"))
    rows = [(text, data.target_names[t]) for text, t in zip(data.data, data.target) if text.strip()]
    random.Random(args.seed).shuffle(rows)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "20ng.jsonl", "w") as f:
        for i, (text, label) in enumerate(rows[: args.docs]):
            f.write(json.dumps({"id": f"ng{i}", "text": text, "label": label}) + "\n")


if __name__ == "__main__":
    main()

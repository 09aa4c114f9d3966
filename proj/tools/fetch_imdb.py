"""Write the IMDB review corpus as JSON lines for the full-scale acceptance run.

    python tools/fetch_imdb.py OUT_DIR

Downloads aclImdb_v1.tar.gz (about 80 MB) and writes OUT_DIR/imdb_train.jsonl
and OUT_DIR/imdb_test.jsonl with "id", "text" and "label" (pos/neg).
Unlabelled training reviews are included in the training file without a label.
"""

import argparse
import json
import pathlib
import re
import tarfile
import urllib.request

URL = "https://ai.stanford.edu/~amaas/data/sentiment/aclImdb_v1.tar.gz"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=pathlib.Path)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    archive = args.out_dir / "aclImdb_v1.tar.gz"
    if not archive.exists():
        urllib.request.urlretrieve(URL, archive)

    out = {s: open(args.out_dir / f"imdb_{s}.jsonl", "w") for s in ("train", "test")}
    pattern = re.compile(r"aclImdb/(train|test)/(pos|neg|unsup)/(\d+_\d+)\.txt$")
    with tarfile.open(archive) as tar:
        for member in tar:
            m = pattern.match(member.name)
            if not m:
                continue
            split, label, stem = m.groups()
            text = tar.extractfile(member).read().decode("utf-8").replace("<br />", " ")
            rec = {"id": f"{split}_{label}_{stem}", "text": text}
            if label != "unsup":
                rec["label"] = label
            out[split].write(json.dumps(rec) + "\n")
    for f in out.values():
        f.close()


if __name__ == "__main__":
    main()

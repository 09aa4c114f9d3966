"""Neural topic models with document metadata."""

import sys

from ._core import CheckpointError, Corpus, Model, run_cli, train

__all__ = ["CheckpointError", "Corpus", "Model", "run_cli", "train", "main"]


def main(argv=None):
    code, out, err = run_cli(list(sys.argv[1:] if argv is None else argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code

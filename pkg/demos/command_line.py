"""
Command-line training
=====================

Write a corpus in the UCI bag-of-words format and train on it through the
``sparsehdp`` command, exactly as from a shell::

    sparsehdp --corpus docword.txt --vocab vocab.txt --kstar 50 --iterations 100
"""
import tempfile
from pathlib import Path

from sparsehdp.cli import main
from sparsehdp.corpus import write_uci_bow
from sparsehdp.synthetic import mixture_corpus

work = Path(tempfile.mkdtemp(prefix="sparsehdp-"))
corpus, _ = mixture_corpus(seed=2)
docword, vocab = write_uci_bow(corpus)
(work / "docword.txt").write_text(docword)
(work / "vocab.txt").write_text(vocab)

code = main(["--corpus", str(work / "docword.txt"), "--vocab", str(work / "vocab.txt"),
             "--kstar", "50", "--iterations", "100", "--alpha", "1.0", "--beta", "0.1",
             "--output-dir", str(work / "run")])
print("exit code", code)

###############################################################################
# The run directory holds the deterministic trace, wall-clock timings per
# phase, periodic checkpoints and the final topic summary.

for path in sorted((work / "run").iterdir()):
    print(path.name)
print((work / "run" / "trace.csv").read_text().splitlines()[-1])
print((work / "run" / "topics.txt").read_text())

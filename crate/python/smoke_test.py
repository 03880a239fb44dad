"""Smoke test for the extentlab extension module.

Build and copy the module next to this script first:

    cargo build -p extentlab-py --release --features extension-module
    cp target/release/libextentlab.so python/extentlab.so
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import extentlab  # noqa: E402

FIXTURE = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "..", "crates", "cli", "tests", "fixtures", "nbc_corpus.jsonl"
)


def main():
    corpus = extentlab.Corpus.load(FIXTURE)
    assert len(corpus) == 1
    (sid,) = corpus.sample_ids()
    assert corpus.tokens(sid)[3] == "worked"

    mock = extentlab.Model.keyword(
        ["Employer", "Located", "Family", "Member"], [("worked", "Employer", 0.9)], "Located", 0.4
    )
    assert mock.predict(corpus) == [("Employer", 0.9)]
    (ext,) = mock.extents(corpus, mode="expanding")
    assert ext["tokens"] == [0, 3, 4, 5, 6], ext
    assert ext["semantic_class"] == "VOP"
    (red,) = mock.extents(corpus, mode="reductive")
    assert 3 in red["tokens"]
    report = extentlab.agreement([ext], [red])
    assert report["label_agreement"] == 1.0

    train = extentlab.Corpus.synthetic("context", 400, seed=1)
    dev = extentlab.Corpus.synthetic("context", 100, seed=2)
    model, training = extentlab.Model.train(train, dev, seed=5, epochs=10)
    preds = [label for label, _ in model.predict(dev)]
    scores = extentlab.f1(dev.labels(), preds)
    assert scores["micro_f1"] >= 0.9, scores
    assert training["best_dev_micro_f1"] == max(e["dev_micro_f1"] for e in training["epochs"])

    with tempfile.TemporaryDirectory() as d:
        model.save(d)
        again = extentlab.Model.load(d)
        assert again.predict(dev) == model.predict(dev)

    extents = model.extents(dev, mode="expanding")
    assert len(extents) == len(dev)
    assert extentlab.REJECT == "REJECT"
    print(f"ok: micro_f1={scores['micro_f1']:.3f}, mean extent size="
          f"{sum(len(e['tokens']) for e in extents) / len(extents):.2f}")


if __name__ == "__main__":
    main()

"""Build a tiny index through the bindings, query it and evaluate it.

Run after `maturin develop`, or with the compiled library on PYTHONPATH.
"""
import os
import tempfile

import tarag

TOPICS = ["harbor", "orchard", "foundry", "observatory"]


def main():
    d = tarag.Date(2016, 2, 29)
    assert str(d) == "2016-02-29"
    assert tarag.Date.parse("2016-02-29") == d
    assert d.add_days(1) == tarag.Date(2016, 3, 1)
    y = tarag.TimeInterval.year(2016)
    assert len(y) == 366 and d in y
    assert not y.overlaps(tarag.TimeInterval.year(2017))
    try:
        tarag.TimeInterval(tarag.Date(2017, 1, 1), tarag.Date(2016, 1, 1))
    except ValueError:
        pass
    else:
        raise AssertionError("reversed interval accepted")

    q = tarag.decompose("What did the harbor report from 2012 to 2014?")
    assert q["constraints"], q

    docs = [
        {
            "id": f"doc{i}",
            "text": f"Published {2010 + i % 8}-05-02. In {2010 + i % 8} the "
            f"{TOPICS[i % 4]} number {i} reported record activity.",
        }
        for i in range(40)
    ]
    docs.append({"id": "undated", "text": "Nothing here says when."})
    index, report = tarag.Index.build(docs, timestamp="2024-01-01T00:00:00Z")
    assert len(index) == 40
    assert sum(1 for r in report["docs"] if r.get("rejection")) == 1
    assert str(index.corpus_bounds.start) == "2010-05-02"

    res = index.query("Which harbor was busy in 2013?", method="ta_rag", k=3)
    chunks = index.chunks()
    for h in res["hits"]:
        assert chunks[h["chunk_id"]]["pub_time_est"].startswith("2013"), h

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "index.bin")
        index.save(path)
        again = tarag.Index.load(path)
        assert again.query("Which harbor was busy in 2013?", k=3)["hits"] == res["hits"]

    items = [
        {
            "item_id": f"q{i}",
            "question": f"What reported record activity in {2010 + i}?",
            "choices": [f"the {t}" for t in TOPICS[i % 4:] + TOPICS[:i % 4]],
            "gold_index": 0,
            "query_type": "specific_year_trend",
        }
        for i in range(8)
    ]
    cmp = index.evaluate(items, methods=["ta_rag", "naive", "bm25"], k=[2, 4], runs=2)
    assert len(cmp["reports"]) == 6
    for r in cmp["reports"]:
        assert r["std_dev"] == 0.0
        print(f'{r["method"]:>7} k={r["k"]:<2} accuracy {r["mean_accuracy"]:.3f}')
    print("smoke test ok")


if __name__ == "__main__":
    main()

"""Cross-checks metric values against trec_eval through its Python bindings.

1. Re-evaluates the checked-in fixture and compares with the frozen values.
2. Runs the tool end to end (simulate, evaluate) and re-scores the emitted
   run and qrels files with trec_eval.

Usage: crosscheck.py <crmltr_tool> <fixture_dir>. Exits 77 (skip) when the
bindings are not installed.
"""
import json
import pathlib
import subprocess
import sys
import tempfile

try:
    import pytrec_eval  # noqa: F401
except ImportError:
    print("pytrec_eval not installed; skipping")
    sys.exit(77)

from make_expected import MEASURES, evaluate, read_qrels, read_run

TOLERANCE = 1e-4
METRIC_KEYS = {
    "map": "map",
    "recip_rank": "mrr",
    "P_5": "P@5",
    "P_10": "P@10",
    "ndcg_cut_5": "NDCG@5",
    "ndcg_cut_10": "NDCG@10",
}


def compare(label, got, want):
    failures = 0
    for measure in MEASURES:
        delta = abs(got[measure] - want[measure])
        status = "ok" if delta <= TOLERANCE else "MISMATCH"
        failures += status != "ok"
        print(f"{label} {measure}: {got[measure]:.6f} vs {want[measure]:.6f} {status}")
    return failures


def rank_scores(run):
    # The tool ranks by exact probability; the file prints 6 decimals, which
    # can tie. Scoring by file order keeps the ranking the tool produced.
    return {q: {doc: -float(i) for i, doc in enumerate(docs)} for q, docs in run.items()}


def main():
    tool, fixture = sys.argv[1], pathlib.Path(sys.argv[2])
    frozen = json.loads((fixture / "trec_eval_expected.json").read_text())
    live = evaluate(read_qrels(fixture / "qrels.txt"), read_run(fixture / "run.txt"))
    failures = compare("fixture", live, frozen)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        subprocess.run([tool, "simulate", "--n-queries", "30", "--n-interactions", "2000",
                        "--seed", "5", "--out", str(tmp / "world")], check=True)
        subprocess.run([tool, "evaluate", "--model", str(tmp / "world" / "logging_model"),
                        "--test", str(tmp / "world" / "test"), "--ks", "5,10",
                        "--out", str(tmp / "eval")], check=True, stdout=subprocess.DEVNULL)
        qrels = read_qrels(tmp / "eval" / "qrels")
        run = {}
        for line in (tmp / "eval" / "run.trec").read_text().splitlines():
            query, _, doc = line.split()[:3]
            run.setdefault(query, []).append(doc)
        judged = {q for q, docs in qrels.items() if any(g > 0 for g in docs.values())}
        external = evaluate(qrels, {q: d for q, d in rank_scores(run).items() if q in judged})
        # P@k over all queries: trec_eval only averages queries with relevant documents.
        reported = json.loads((tmp / "eval" / "metrics.json").read_text())
        ours = {m: reported[key] for m, key in METRIC_KEYS.items()}
        if len(judged) != len(run):
            scale = len(run) / len(judged)
            for m in ("P_5", "P_10"):
                ours[m] *= scale
        failures += compare("tool", ours, external)

    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()

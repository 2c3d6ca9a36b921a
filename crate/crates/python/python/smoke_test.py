"""Smoke test for the compiled extension: python python/smoke_test.py"""

import json
import math
import random
import statistics

import gradeguard as gg


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    grades = [2.0, 2.5, 3.0, 3.0, 4.5]
    assert close(gg.mean_grade(grades), statistics.mean(grades))
    assert close(gg.indecisiveness_score(grades), statistics.stdev(grades) / 10)
    assert close(gg.population_sd(grades), statistics.pstdev(grades))
    pairs = [(1.0, 1.5), (3.0, 2.0), (4.0, 4.0)]
    assert close(gg.rmse(pairs), math.sqrt((0.25 + 1.0) / 3))
    assert close(gg.mae(pairs), 1.5 / 3)
    try:
        gg.indecisiveness_score([])
    except ValueError:
        pass
    else:
        raise AssertionError("empty grades accepted")

    xs = [i / 100 for i in range(51)]
    ys = [0.8 / (1 + math.exp(-60 * (x - 0.12))) for x in xs]
    fit = gg.fit_logistic(xs, ys)
    assert close(fit.l, 0.8, 1e-6) and close(fit.k, 60, 1e-6) and close(fit.t0, 0.12, 1e-6), fit
    coeffs = [0.5, -1.0, 2.0, 0.25, -3.0]
    ys = [sum(c * x**p for p, c in enumerate(coeffs)) for x in xs]
    assert all(close(a, b, 1e-9) for a, b in zip(gg.fit_poly4(xs, ys), coeffs))

    rng = random.Random(5)
    items = [gg.ScoredItem(t, min(5.0, max(0.0, t + rng.gauss(0, 10 * s))), s)
             for t, s in ((rng.randint(0, 10) / 2, rng.uniform(0, 0.3)) for _ in range(300))]
    n_all, e_all = gg.confident_rmse(items, 1.0)
    assert n_all == 300 and close(e_all, gg.rmse([(i.mean_grade, i.true_grade) for i in items]))
    cal = gg.calibrate(items)
    assert 0.0 <= cal.optimal_is_scal <= 0.5 and 0.0 <= cal.optimal_is_ncal <= 0.5
    assert cal.threshold("scal-minimum") == cal.optimal_is_scal
    assert json.loads(cal.to_json())["optimal_is_ncal"] == cal.optimal_is_ncal

    corpus, profile, high = gg.synthetic_corpus(records=200, seed=11)
    assert len(corpus) == 200 and len(high) == 40
    sample = corpus.sbus_sample(3)
    assert len(sample) <= 5 * len(corpus.question_ids())
    a = gg.run_mock_pipeline(corpus, profile, seed=3)
    b = gg.run_mock_pipeline(corpus, profile, seed=3)
    assert a == b
    report = json.loads(a)
    assert report["record_count"] == 200
    assert report["confident_count"] + report["routed_count"] == 200
    assert report["rmse_with_gg"] < report["rmse_without_gg"]
    print("smoke test ok: rmse %.4f -> %.4f, %d routed"
          % (report["rmse_without_gg"], report["rmse_with_gg"], report["routed_count"]))


if __name__ == "__main__":
    main()

"""Exercise the extension module end to end.

Build and install it first, e.g. `maturin develop --release` from
crates/py, then run `python python/smoke_test.py` from the repo root.
"""

import math

import domdist


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    assert close(domdist.distance("l2", [[0.0, 0.0]], [[3.0, 4.0]]), 5.0)
    assert close(domdist.distance("cosine", [[1.0, 0.0]], [[0.0, 2.0]]), 1.0)
    x, y, sigma = [0.5, 1.0], [2.0, -1.0], 0.8
    want = 2.0 * (1.0 - math.exp(-((x[0] - y[0]) ** 2 + (x[1] - y[1]) ** 2) / (2 * sigma)))
    assert close(domdist.distance("mmd", [x], [y], bandwidth=sigma), want)
    assert close(domdist.distance("fld", [[0.0], [2.0]], [[4.0], [6.0]], ridge=0.0), 4.0)
    s, t = [[0.0, 1.0], [2.0, 3.0]], [[1.0, 1.0], [4.0, 0.0]]
    mix = domdist.mixture_distance("l2:0.5,coral:2", s, t)
    assert close(mix, 0.5 * domdist.distance("l2", s, t) + 2 * domdist.distance("coral", s, t))
    gs, gt = domdist.grad_distance("l2", s, t)
    assert len(gs) == 2 and len(gt[0]) == 2

    sep = [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]
    assert domdist.z1(sep) == 1.0
    phi, alpha = domdist.mixture_phi([sep])
    assert close(phi, domdist.z2(sep), 1e-6) and len(alpha) == 1

    bandit = domdist.BanditState(["a", "b", "c"])
    for reward in (1.0, 1.0, 1.0):
        arm = bandit.select()
        bandit.update(arm, reward)
    assert bandit.pulls == [1, 1, 1] and bandit.total_pulls == 3

    data = domdist.gen_synthetic(num_domains=3, dim=4, shift=2.0, seed=1)
    assert [d.domain_id for d in data] == ["d0", "d1", "d2"]
    inputs, labels = data[0].split("train")
    assert len(inputs) == len(labels) and len(inputs[0]) == 4

    report = domdist.analyze(data, measures=["l2", "mmd"], probe_size=50)
    assert {r["measure"] for r in report["separability"]} == {"l2", "mmd"}

    cfg = {"steps": 100, "eval_interval": 25, "beta": 0.2, "mixture": "mmd"}
    run = domdist.train_single(data[0], data[1], cfg)
    assert 0.0 <= run["test_accuracy"] <= 1.0 and len(run["evals"]) == 4

    sources, target = domdist.gen_multi_source(dim=4, seed=2)
    multi = domdist.train_multi(sources, target, "ucb", {"steps": 100, "round_length": 10})
    assert sum(multi["trace"]["pulls"]) == 10

    try:
        domdist.distance("euclid", s, t)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown measure accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()

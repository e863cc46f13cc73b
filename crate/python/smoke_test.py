"""Smoke test for the cocyclab Python module.

Build and install the extension first:

    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml

then run `python python/smoke_test.py`.
"""

import json
import math

import cocyclab


def check_construction():
    run = cocyclab.construct_measurable(dim=1, base=2, rounds=2, depth_limit=24)
    assert len(run.certificates) == 8
    for cert in run.certificates:
        cert.validate(run.cocycle)
    log = json.loads(run.log)
    assert all(log["final_valid"])

    again = cocyclab.Cocycle.from_text(run.cocycle.to_text())
    assert again.to_text() == run.cocycle.to_text()
    assert again.eval([3], 0) == run.cocycle.eval([3], 0)

    tampered = json.loads(run.certificates[0].to_json())
    num, den = tampered["measured"].split("/")
    tampered["measured"] = f"{int(num) + 1}/{den}"
    bad = cocyclab.Certificate.from_json(json.dumps(tampered))
    try:
        bad.validate(run.cocycle)
    except cocyclab.VerificationError as e:
        assert "measured" in str(e)
    else:
        raise AssertionError("tampered certificate was accepted")
    print("construction: 8 certificates verified, tampering detected")


def check_topological():
    targets = [(2, [1.0], 1.0), (3, [-1.0], 0.5), (4, [1.0], 0.25)]
    h = cocyclab.construct_topological(targets, budget=1_000_000)
    records = json.loads(h.records())
    for r in records:
        assert r["final_residual"] < r["target"]["eta"]
    small, big = h.coverage(1_000), h.coverage(10_000)
    assert big > small
    print(f"topological: coverage {small:.4f} -> {big:.4f}")


def check_lab():
    walk = json.loads(cocyclab.recurrence(valdim=1, steps=100_000, trials=2, radius=0.5, seed=3))
    assert all(t["returns"] > 0 for t in walk["trials"])
    d = cocyclab.discrepancy([math.sqrt(2) - 1], steps=100_000, cells=10)
    assert d < 0.01
    code, report = cocyclab.run_cli(["--dim", "2", "--out", "/tmp/cocyclab-smoke", "decompose", "--synthesize"])
    assert code == 0, report
    payload = json.loads(report)["payload"]
    assert payload["truth"]["max_error"] < 1e-12
    code, _ = cocyclab.run_cli(["inspect", "--no-such-flag"])
    assert code == 2
    print(f"lab: walk returns {walk['trials'][0]['returns']}, discrepancy {d:.2e}, decomposition ok")


if __name__ == "__main__":
    check_construction()
    check_topological()
    check_lab()
    print("all smoke checks passed")

"""Smoke test for the ptp extension module.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import math
import random

import ptp


def lpm_oracle(entries, name):
    comps = name.strip("/").split("/")
    best = None
    for prefix, faces in entries.items():
        p = [c for c in prefix.strip("/").split("/") if c]
        if comps[: len(p)] == p and (best is None or len(p) > len(best[0].strip("/").split("/"))):
            best = (prefix, faces)
    return best


def check_names():
    assert ptp.flow_name_of("/video/a/17") == "/video/a"
    assert ptp.sequence_of("/video/a/17") == 17
    assert ptp.packet_name("/video/a", 3) == "/video/a/3"
    try:
        ptp.flow_name_of("no-slash")
    except ValueError:
        pass
    else:
        raise AssertionError("bad name accepted")


def check_tag():
    t = ptp.Tag().pushed(4).pushed(2)
    assert t.faces == [4, 2] and t.top() == 2 and len(t) == 2
    face, rest = t.popped()
    assert face == 2 and rest == ptp.Tag([4])
    assert hash(rest) == hash(ptp.Tag([4]))


def check_fab():
    rng = random.Random(1)
    fib = ptp.Fib()
    entries = {}
    for _ in range(40):
        depth = rng.randint(1, 3)
        prefix = "/" + "/".join(rng.choice("abc") for _ in range(depth))
        faces = [rng.randint(0, 5)]
        fib.insert(prefix, faces)
        entries[prefix] = faces
    fab = ptp.FabTable(8)
    for i in range(5000):
        depth = rng.randint(1, 5)
        name = "/" + "/".join(rng.choice("abc") for _ in range(depth)) + f"/{i}"
        want = lpm_oracle(entries, name)
        assert fab.resolve(fib, name) == want == fib.lpm(name), name
    hits, misses, evictions, _ = fab.stats()
    assert hits + misses > 0 and evictions > 0 and len(fab) <= 8


def check_laws():
    assert math.isclose(ptp.alpha([10.0, 40.0], [0.08, 0.08]), 0.8)
    assert math.isclose(ptp.increment([20.0], [0.1], 0), 1 / 20)
    assert ptp.decrease(20.0) == 15.0
    assert ptp.decrease(1.0) == 1.0


def check_scenario():
    out = ptp.run_scenario("scenario4", ["duration=30"])
    assert out.name == "scenario4" and out.events > 0
    assert out.links_csv().startswith("t,link_id,")
    assert out.goodput("1", start=22.0, end=26.0) > 1.5e6
    assert 0.0 <= out.utilization("2", "1") <= 100.0
    again = ptp.run_scenario("scenario4", ["duration=30"])
    assert again.paths_csv() == out.paths_csv()
    try:
        ptp.run_scenario("no-such-scenario")
    except ValueError as e:
        assert "scenario5" in str(e)
    else:
        raise AssertionError("unknown scenario accepted")
    for name, passed, detail in ptp.run_scenario("scenario1_case1").checks:
        print(f"  scenario1_case1 {name}: {'pass' if passed else 'FAIL'} ({detail})")


if __name__ == "__main__":
    for check in (check_names, check_tag, check_fab, check_laws, check_scenario):
        check()
        print(f"{check.__name__}: ok")
    print("smoke test passed")

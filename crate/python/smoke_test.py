"""Smoke test for the colorcode extension module.

Build and stage the module first:

    cargo build -p colorcode-py --release
    cp target/release/libcolorcode_py.so python/colorcode.so
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import colorcode  # noqa: E402


def main():
    lat = colorcode.Lattice(5)
    assert lat.n == 17, lat.n
    assert lat.validate() == []
    assert sorted({len(f) for f in lat.faces}) == [4, 8]

    dec = colorcode.Decoder(lat)
    for q in range(lat.n):
        bits = [i == q for i in range(lat.n)]
        res = dec.decode_2d(lat.syndrome(bits))
        assert res["correction"] == [q], (q, res)
        assert not lat.is_logical_failure(bits, res["correction"])

    history = [[False] * len(lat.faces) for _ in range(6)]
    assert dec.decode_3d(history)["correction"] == []

    pairs, weight = colorcode.min_weight_perfect_matching(
        4, [(0, 1, 1), (2, 3, 1), (0, 2, 3), (1, 3, 3), (0, 3, 3), (1, 2, 3)]
    )
    assert weight == 2 and sorted(pairs) == [(0, 1), (2, 3)], (pairs, weight)

    fx, fz = colorcode.run_trials("code_capacity", 5, 0.0, 100, 1)
    assert (fx, fz) == (0, 0)
    fx, _ = colorcode.run_trials("circuit", 3, 0.01, 200, 1, p_identity_ratio=0.1)
    assert 0 <= fx <= 200

    faults, violations = colorcode.circuit_audit(3)
    assert faults > 0 and violations == 0

    try:
        colorcode.Lattice(4)
    except ValueError:
        pass
    else:
        raise AssertionError("even distance accepted")

    print("colorcode smoke test passed")


if __name__ == "__main__":
    main()

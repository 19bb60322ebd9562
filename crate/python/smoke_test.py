"""Smoke test for the nonlocal_lab Python module.

Build and install first, e.g.

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/nonlocal_lab-*.whl
"""

import json
import math
import tempfile

import nonlocal_lab as nl


def main():
    p = nl.Params(1.0, 1.0, 1.0)
    g = nl.Grid(8.0, 1024)
    u = nl.Field.from_spec(g, {"type": "cosine", "amplitude": 1.0, "frequency": 1.0})
    lu = nl.Operator.linear(nl.Kernel.power(p)).apply(u)
    centre = len(lu) // 2
    assert abs(lu[centre] + math.pi) < 1e-3, lu[centre]

    rough = nl.Params(1.5, 0.5, 2.0)
    k = nl.Kernel.dyadic(rough, 7)
    assert k.bounds_ok()
    line = nl.Field.from_spec(nl.Grid(2.0, 128), {"type": "affine", "slope": 0.5, "intercept": 1.0})
    for op in (nl.Operator.pucci_plus(rough), nl.Operator.pucci_minus(rough)):
        assert max(abs(v) for v in op.apply(line)) < 1e-10

    a, b, d = line.fit_plane(0.25, 0.0, 0.5, 1.5)
    assert abs(a - 0.5) < 1e-12 and abs(b - 1.125) < 1e-12 and d < 1e-12

    power = nl.Field.from_spec(nl.Grid(2.0, 1024), {"type": "power", "exponent": 0.5})
    radii = [0.5 / 2**j for j in range(6)]
    _, _, beta, _ = power.space_exponent([(0.0, 0.0)], radii, 1.0, "constant-fit")
    assert abs(beta - 0.5) < 0.05, beta

    report = json.loads(nl.selfcheck(1))
    assert report["passed"], report["checks"]

    cfg = "\n".join([
        "scenario = sigma2_limit",
        "params.sigma = 1.9",
        "grid.half_width = 4.0",
        "grid.n_points = 1024",
        "exterior.type = gaussian",
        "limit2.sigmas = 1.9, 1.99",
        "assert.decreasing = 1",
    ])
    with tempfile.TemporaryDirectory() as out:
        rep = json.loads(nl.run_scenario(cfg, out))
    assert rep["passed"], rep["checks"]
    assert rep["version"] == nl.__version__

    print("python smoke test passed")


if __name__ == "__main__":
    main()

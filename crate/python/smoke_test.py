"""Smoke test for the qfractal extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/qfractal-*.whl
"""

import math
import json
import pathlib
import tempfile

import qfractal


def check(name, ok):
    print(f"{'ok' if ok else 'FAIL'}  {name}")
    return ok


def main():
    results = []
    d = qfractal.BoxDomain()
    results.append(check("period", abs(d.period - 1 / (2 * math.pi)) < 1e-15))

    s = qfractal.SpectralState.uniform(0.0, 1.0, 5, normalize=False)
    results.append(check("odd modes", s.modes == [1, 3, 5]))
    results.append(check("c1", abs(abs(s.coefficients[0]) ** 2 - 0.81057) < 1e-5))

    u = qfractal.SpectralState.uniform_full(64)
    results.append(check("energy 4K", abs(u.mean_energy(16) - 64.0) < 1e-9))
    xs = d.grid(201)
    r0 = u.density(0.0, xs)
    rt = u.density("rational 1/1", xs)
    results.append(check("recurrence", max(abs(a - b) for a, b in zip(r0, rt)) < 1e-10))

    psi, dpsi, _ = u.evaluate("irrational sqrt2", 0.3)
    v = qfractal.velocity(u, "irrational sqrt2", 0.3)
    results.append(check("guidance", abs(v - (dpsi / psi).imag) < 1e-12))

    e = qfractal.SpectralState.eigenstate(2)
    results.append(check("Q = E_n", abs(qfractal.quantum_potential(e, 0.1, 0.3) - d.mode_energy(2)) < 1e-8))
    results.append(check("node marker", qfractal.quantum_potential(e, 0.1, 0.5) in (math.inf, -math.inf)))

    tr = qfractal.integrate(u, 0.5, 0.0, "rational 1/8", n_terms=32)
    results.append(check("centre is fixed", all(x == 0.5 for x in tr["x"])))

    fit = qfractal.spectrum_fit(u)
    results.append(check("spectrum D_f", abs(fit["D_f"] - 1.5) < 0.01))
    fit = qfractal.density_fit(u, "irrational sqrt2", [4, 8, 16, 32, 64])
    results.append(check("density fit keys", {"N_values", "D_f", "flags"} <= set(fit)))

    try:
        qfractal.SpectralState.from_coefficients([(3, 1.0), (2, 1.0)])
        results.append(check("decreasing modes rejected", False))
    except ValueError:
        results.append(check("decreasing modes rejected", True))

    with tempfile.TemporaryDirectory() as tmp:
        cfg = pathlib.Path(tmp, "run.toml")
        cfg.write_text('[state]\nkind = "uniform"\nn_max = 15\n')
        files = qfractal.run("build-state", cfg, pathlib.Path(tmp, "out"))
        summary = json.loads(pathlib.Path(tmp, "out", "state.json").read_text())
        results.append(check("run build-state", "state.json" in files and len(summary["modes"]) == 8))

    if not all(results):
        raise SystemExit(1)


if __name__ == "__main__":
    main()

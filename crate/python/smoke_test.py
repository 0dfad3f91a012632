"""Smoke test for the gece_py extension module.

Build it first:

    cargo build --release -p gece-python --features extension-module

The script picks up target/release/libgece_py.so (or an installed gece_py).
"""

import importlib.util
import json
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    try:
        import gece_py

        return gece_py
    except ImportError:
        pass
    for name in ("libgece_py.so", "libgece_py.dylib", "gece_py.dll"):
        built = ROOT / "target" / "release" / name
        if built.exists():
            break
    else:
        sys.exit("gece_py not built; run: cargo build --release -p gece-python --features extension-module")
    suffix = ".pyd" if built.suffix == ".dll" else ".so"
    target = pathlib.Path(tempfile.mkdtemp()) / f"gece_py{suffix}"
    shutil.copy(built, target)
    spec = importlib.util.spec_from_file_location("gece_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    g = load_module()

    fixture = g.Dataset([[0.1, 0.9], [0.9, 0.1], [0.3, 0.7], [0.3, 0.7]], [1, 1, 1, 1])
    assert len(fixture) == 4 and fixture.k == 2
    assert abs(g.traditional_ece(fixture) - 0.35) < 1e-12
    assert abs(g.gece(fixture, binning="uniform:2:0.5:1") - 0.35) < 1e-12
    result = g.gece_result(fixture, binning="uniform:2:0.5:1")
    assert result["n"] == 4 and len(result["bins"]) == 2

    ln9 = math.log(9.0)
    logits = g.Dataset.from_logits([[0.0, ln9]] * 4, [1, 1, 1, 0])
    ts, report = g.fit_calibrator(logits, "ts")
    temperature = float(json.loads(ts.to_json())["parameters"]["temperature"])
    assert abs(temperature - 2.0) < 0.01, temperature
    assert report["final_nll"] <= report["initial_nll"]
    assert g.Calibrator.from_json(ts.to_json()).apply(logits).probs == ts.apply(logits).probs

    data = g.generate("calibrated:1:3:3000", seed=1)
    sweep = g.gamma_sweep(data, seed=2, gammas=[1.0, 0.5, 0.25], n_resamples=20)
    assert sweep == g.gamma_sweep(data, seed=2, gammas=[1.0, 0.5, 0.25], n_resamples=20)
    assert len(sweep["mean_ece"]) == 3
    profile = g.variance_profile(data, seed=3, fractions=[0.1, 1.0], n_resamples=20)
    assert len(profile["std_ece"]) == 2

    try:
        g.gece(fixture, lens="bogus")
    except ValueError:
        pass
    else:
        raise AssertionError("bad lens accepted")

    print(f"gece_py {g.__version__}: smoke test passed")


if __name__ == "__main__":
    main()

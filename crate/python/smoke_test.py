#!/usr/bin/env python3
"""Build the ccop_py extension, import it, and sanity-check one analysis.

Run from anywhere: paths are resolved relative to this file. Exits nonzero
with a message on the first failed check.
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build() -> Path:
    subprocess.run(
        ["cargo", "build", "-p", "ccop-py"],
        cwd=ROOT,
        check=True,
    )
    for name in ("libccop_py.so", "libccop_py.dylib", "ccop_py.dll"):
        candidate = ROOT / "target" / "debug" / name
        if candidate.exists():
            return candidate
    sys.exit("built extension not found under target/debug/")


def import_extension(lib: Path):
    # Python wants the module file named ccop_py.<ext>; cargo names it with
    # the platform lib prefix, so stage a renamed copy on sys.path.
    stage = Path(tempfile.mkdtemp(prefix="ccop-py-"))
    suffix = ".pyd" if lib.suffix == ".dll" else ".so"
    shutil.copy2(lib, stage / f"ccop_py{suffix}")
    sys.path.insert(0, str(stage))
    import ccop_py  # noqa: E402

    return ccop_py


def check(label: str, ok: bool) -> None:
    print(f"smoke {label}: {'ok' if ok else 'FAIL'}")
    if not ok:
        sys.exit(1)


def main() -> None:
    mod = import_extension(build())

    fixture = ROOT / "crates" / "ccop" / "fixtures" / "instability.toml"
    report = json.loads(mod.analyze(str(fixture)))

    points = report["points"]
    check("single stationary point", len(points) == 1)

    p = points[0]
    check("point at origin", max(abs(v) for v in p["x"]) <= 1e-8)
    check("gamma vanishes", all(abs(g) <= 1e-8 for g in p["gamma"]))

    c = p["classification"]
    check("nd3 fails", c["nd3"] == "fails")
    check("not strongly stable", c["strong_stability"]["status"] == "fails")
    check(
        "sosc holds on both cones",
        c["sosc_critical"]["status"] in ("holds_exact", "holds_sampled")
        and c["sosc_tangent"]["status"] in ("holds_exact", "holds_sampled"),
    )

    # Defaults are keyword-overridable; a looser tolerance must still parse.
    loose = json.loads(mod.analyze(str(fixture), tol=1e-6))
    check("tol keyword accepted", len(loose["points"]) == 1)

    err = None
    try:
        mod.analyze(str(ROOT / "no-such-file.toml"))
    except ValueError as e:
        err = e
    check("missing file raises ValueError", err is not None)

    print("smoke test passed")


if __name__ == "__main__":
    main()

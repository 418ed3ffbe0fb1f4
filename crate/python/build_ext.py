#!/usr/bin/env python3
"""Build the tansec_py extension with cargo and copy it next to this file.

Use this when maturin is unavailable; otherwise `maturin develop` in
crates/py does the same job.
"""
import pathlib
import shutil
import subprocess
import sys
import sysconfig

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "tansec-py"], cwd=ROOT, check=True
    )
    built = ROOT / "target" / "release" / "libtansec_py.so"
    if not built.exists():  # macOS fallback
        built = ROOT / "target" / "release" / "libtansec_py.dylib"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    dest = pathlib.Path(__file__).resolve().parent / f"tansec_py{suffix}"
    shutil.copy2(built, dest)
    print(f"installed {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Place the UCI Adult files under data/adult/.

The raw ``adult.data``, ``adult.test`` and ``adult.names`` files ship inside
the ``responsibly`` wheel on PyPI, so pip (or any PyPI mirror) is enough:

    python3 scripts/fetch_adult.py [--dest data/adult]
"""
import argparse
import hashlib
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEEL = "responsibly==0.1.2"
MEMBER = "responsibly/dataset/adult/{}"
FILES = ("adult.data", "adult.test", "adult.names")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dest", default=str(Path(__file__).resolve().parents[1] / "data" / "adult"))
    args = ap.parse_args()
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
                        "-d", tmp, WHEEL], check=True)
        wheel = next(Path(tmp).glob("responsibly-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            for name in FILES:
                blob = z.read(MEMBER.format(name))
                (dest / name).write_bytes(blob)
                print(f"{name:12s} {len(blob):>8d} bytes  sha256 {hashlib.sha256(blob).hexdigest()[:16]}")


if __name__ == "__main__":
    main()

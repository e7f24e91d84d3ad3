"""Regenerate the golden ``--json`` outputs of the bundled scenarios.

Run after an intentional output change; the test suite checks every golden
against independent oracles as well as against a fresh run.
"""

import io
import json
import sys
from pathlib import Path

from causec.cli import run

HERE = Path(__file__).resolve().parent


def scenarios():
    return json.loads((HERE / "manifest.json").read_text())


def argv(entry, threads=1):
    return [a.replace("{S}", str(HERE)) for a in entry["args"]] + ["--json", "--threads", str(threads)]


def render(entry, threads=1):
    out, err = io.StringIO(), io.StringIO()
    code = run(argv(entry, threads), out, err)
    if code:
        raise RuntimeError(f"{entry['name']}: exit {code}: {err.getvalue().strip()}")
    return out.getvalue()


def main():
    golden = HERE / "golden"
    golden.mkdir(exist_ok=True)
    for entry in scenarios():
        (golden / f"{entry['name']}.json").write_text(render(entry))
        print("wrote", entry["name"])


if __name__ == "__main__":
    sys.exit(main())

"""Regenerate the expected-output fixtures shipped with the symbol corpus."""
import json
from pathlib import Path

import numpy as np

from dircomp.cli import corpus
from dircomp.counting import restricted_counting
from dircomp.operator import assemble_matrix, singular_values
from dircomp.core import HARDY, bergman
from dircomp.symbols import load_symbol

POINTS = [0.5 + 0j, 0.25 + 1.5j, 1.0 - 3.0j]
TARGETS = [0.3 + 0j, 0.1 + 2.0j, 0.45 - 7.0j]

def fixture(path):
    phi = load_symbol(path)
    decl = json.loads(path.read_text())["declared_class"]
    out = {
        "declared_class": decl,
        "certification": phi.certification.verdict,
        "phi": [[p.real, p.imag, phi(p).real, phi(p).imag] for p in POINTS],
        "singular_values_hardy_N16": [float(x) for x in singular_values(assemble_matrix(phi, 16, HARDY))[:5]],
        "singular_values_bergman0_N16": [float(x) for x in singular_values(assemble_matrix(phi, 16, bergman(0.0)))[:5]],
    }
    if phi.c0 >= 1:
        out["restricted"] = [[w.real, w.imag, restricted_counting(phi, w).value] for w in TARGETS]
    return out

def main():
    paths = corpus()
    fx = {p.stem: fixture(p) for p in paths}
    dest = paths[0].parent / "fixtures.json"
    dest.write_text(json.dumps(fx, indent=1) + "\n")
    print(f"wrote {dest}")

if __name__ == "__main__":
    main()

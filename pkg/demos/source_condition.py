"""Turn the builtin ellipses image into ground truths that satisfy the source condition.

For each exponent the script prints how far the projected image moved from
the original and how exactly its subgradient lies in the range of the
backprojection, then writes PGM snapshots you can open in any image viewer.

    python demos/source_condition.py [output_dir]
"""

import sys
from pathlib import Path

from bregrates.experiments import p_tag, radon_operator
from bregrates.io import write_pgm
from bregrates.penalty import make_penalty
from bregrates.phantom import ellipses_phantom
from bregrates.source_condition import project_to_source_condition

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out/source_condition")
out.mkdir(parents=True, exist_ok=True)

side = 64
op = radon_operator(side, 180)
image = ellipses_phantom(side)
write_pgm(out / "original.pgm", image)

print(f"{'p':>6} {'rel change':>11} {'residual':>10} {'CGLS its':>9}")
for p in (2.0, 1.5, 4.0 / 3.0):
    sc = project_to_source_condition(image, op, make_penalty(p, side))
    write_pgm(out / f"{p_tag(p)}_f_dagger.pgm", sc.f_dagger)
    print(f"{p:6.4g} {sc.rel_change:11.4f} {sc.relative_sc_residual:10.2e} {sc.iterations:9d}")

print(f"images written to {out}/")

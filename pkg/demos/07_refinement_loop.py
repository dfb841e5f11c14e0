"""The interactive refinement loop against a trained run directory.

Needs checkpoints (train one with the CLI first, or point RUN_DIR at the
cached acceptance run):

    hiermotion train-vae --out runs/default
    hiermotion train-diffusion --out runs/default
    python demos/07_refinement_loop.py runs/default
"""

import sys
from pathlib import Path

from hiermotion.diffusion import MissingCheckpoint
from hiermotion.harness.experiment import Bundle
from hiermotion.semgraph import EditKind, EditOp, apply_edit

run_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/default")
try:
    bundle = Bundle.load(run_dir)
except MissingCheckpoint as exc:
    candidates = sorted(Path("runs/acceptance").glob("*/manifest.json"))
    if candidates:
        run_dir = candidates[0].parent
        bundle = Bundle.load(run_dir)
    else:
        sys.exit(f"no checkpoints: {exc}\ntrain first (see module docstring)")
print("loaded", run_dir)

text = "a person walks quickly to the left in a straight line."
graph = bundle.parse(text)
left = next(n for n in graph.specific_nodes() if n.text == "to the left")
walk = next(e.src for e in graph.edges if e.dst == left.id)

print(f"prompt: {text}")
print("sweeping the walks->'to the left' edge weight at a locked seed:")
for weight in (0.5, 1.0, 1.5, 2.0):
    edited = apply_edit(graph, EditOp(EditKind.SET_EDGE_WEIGHT, src=walk,
                                      dst=left.id, weight=weight))
    result = bundle.generate(edited, seed=17, length=60)
    disp = result.final.displacement_along("left")
    bar = "#" * max(0, int(disp * 20))
    print(f"  weight {weight:3.1f} -> leftward displacement {disp:+.3f}  {bar}")

masked = apply_edit(graph, EditOp(EditKind.MASK_NODE, node=walk))
result = bundle.generate(masked, seed=17, length=60)
print(f"\nwith the verb masked, generation still runs from the specifics: "
      f"leftward displacement {result.final.displacement_along('left'):+.3f}")

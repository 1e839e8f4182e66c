"""Evaluate the bundled replay fixtures without any live model.

    python3 demos/replay_eval.py

The same thing from the command line:

    cd tests/fixtures/replay
    groundlogic eval --dataset dataset.json --replay two_people_car \
        --replay lone_dog --replay mug_reperception --parallel 4
"""

from pathlib import Path

from groundlogic.backends import ReplayStore, replay_suite
from groundlogic.harness import evaluate, load_dataset

root = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "replay"
dirs = sorted(p for p in root.iterdir() if (p / "index.json").is_file())
suite = replay_suite(ReplayStore(dirs[0], extra=dirs[1:]))

report = evaluate(load_dataset(root / "dataset.json"), suite, parallelism=4)
for sample in report.samples:
    print(f"{sample.id:20s} {sample.status:10s} target={sample.target_id} IoU={sample.iou:.3f} rows={sample.rows}")
for block in ("including_errors", "excluding_errors"):
    m = report.metrics[block]
    print(f"{block:17s} acc@0.5={m['accuracy_at_50']} mean IoU={m['mean_iou']} cIoU={m['ciou']}")

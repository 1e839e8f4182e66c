"""Regenerate the replay fixtures under tests/fixtures/replay/.

    python3 -m tests.build_fixtures

Each scene is run once against the scripted world with recording switched on.
The result JSON of that recording run is stored next to the traffic so replay
tests can compare against it byte for byte.
"""

import json
import shutil
from pathlib import Path

from groundlogic.automaton import run
from groundlogic.backends import ReplayStore, recording_suite
from groundlogic.backends.scripted import ScriptedWorld
from groundlogic.spatial import Bitmask, BoundingBox

from tests.scenes import FIXTURE_SCENES

ROOT = Path(__file__).parent / "fixtures" / "replay"


def fixture_dirs() -> list[Path]:
    return [ROOT / name for name in FIXTURE_SCENES]


def record_scene(name: str, directory: Path) -> str:
    scene, _, segmenter = FIXTURE_SCENES[name]
    world = ScriptedWorld([scene])
    if directory.exists():
        shutil.rmtree(directory)
    directory.mkdir(parents=True)
    image = world.images[name]
    image.save(directory / "image.png")
    suite = recording_suite(world.suite(segmenter=segmenter), ReplayStore(directory))
    result = run(image, scene.query, suite)
    (directory / "result.json").write_text(result.to_json())
    return result.to_json()


def write_dataset(root: Path) -> Path:
    entries = []
    for name, (scene, gt, _) in FIXTURE_SCENES.items():
        entry = {"id": name, "image": f"{name}/image.png", "query": scene.query, "gt_box": list(gt)}
        if name == "two_people_car":
            entry["gt_mask"] = Bitmask.from_box(BoundingBox(*gt), scene.width, scene.height).to_rle()
        entries.append(entry)
    path = root / "dataset.json"
    path.write_text(json.dumps(entries, indent=2) + "\n")
    return path


def main() -> None:
    ROOT.mkdir(parents=True, exist_ok=True)
    for name in FIXTURE_SCENES:
        result = json.loads(record_scene(name, ROOT / name))
        rows = [e["row"] for e in result["trace"]]
        print(f"{name}: {result['status']} {result['target']['id'] if result['target'] else None} rows={rows}")
    print(f"dataset: {write_dataset(ROOT)}")


if __name__ == "__main__":
    main()

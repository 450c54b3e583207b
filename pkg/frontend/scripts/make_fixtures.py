"""Regenerate tests/fixtures/trajectories.json from a live backend session.

Run from the repository root: python frontend/scripts/make_fixtures.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from prefmpc.server import create_app

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "trajectories.json"


def main():
    client = TestClient(create_app())
    sid = client.post("/sessions", json={"n_t": 12, "seed": 2024}).json()["id"]
    entries = []
    for k in range(10):
        model_id = "oracle" if k % 2 == 0 else "random"
        doc = client.post(f"/sessions/{sid}/simulate", json={"model_id": model_id}).json()
        entries.append(doc)
    OUT.write_text(json.dumps({"settle_eps": 0.1, "simulations": entries}, indent=1))
    print(f"wrote {len(entries)} simulations to {OUT}")


if __name__ == "__main__":
    main()

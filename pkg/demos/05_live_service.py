#!/usr/bin/env python3
# The operator service end to end: run the pipeline on a synthetic scenario
# with the HTTP API up, watch the stream, adjust the threshold, label an
# event, and pull the training export that `gridwatch classify` consumes.

import json
import pathlib
import tempfile
import threading
import urllib.request

from gridwatch.pipeline import Pipeline, PipelineConfig
from gridwatch.server import GridwatchServer

out_dir = pathlib.Path(__file__).resolve().parent / "demo_out"
out_dir.mkdir(exist_ok=True)

SCENARIO = """
duration_s = 420
rate_hz = 30
seed = 9
event = spike,150,16,0.5
event = drop,240,13,2
event = oscillatory,330,15,4
"""
scenario_file = pathlib.Path(tempfile.mkdtemp()) / "live.conf"
scenario_file.write_text(SCENARIO)

config = PipelineConfig(
    scenario=str(scenario_file),
    tau_minutes=1.0,
    threshold_t=12.0,
    persist_dir=str(scenario_file.parent / "data"),  # fresh log per run
    listen="127.0.0.1:8471",
    replay_speed=0.0,  # as fast as the machine allows
)
pipeline = Pipeline(config)
server = GridwatchServer(pipeline).start()
base = f"http://{server.address}"
print(f"service listening on {base}")


def get(path):
    with urllib.request.urlopen(base + path, timeout=10) as resp:
        return json.loads(resp.read().decode())


def post(path, payload):
    req = urllib.request.Request(base + path, data=json.dumps(payload).encode())
    with urllib.request.urlopen(req, timeout=10) as resp:
        return json.loads(resp.read().decode())


# raise the threshold while the stream is still warming up; the change is
# journaled and applied by the detector agent between ticks
print("ack:", post("/threshold", {"value": 11.0, "operator": "demo-operator"}))

runner = threading.Thread(target=pipeline.run)
runner.start()
runner.join()

health = get("/health")
print(f"\nrun finished: {health['ticks']} ticks, {health['events']} events, threshold={health['threshold']}")

model = get("/model")
print(f"live model: VAR({model['var']['p']}) on K={model['var']['K']} channels, fitted on {model['var']['trained_on']} points")

events = get("/events")["events"]
for ev in events:
    print(f"  event {ev['id']}: {ev['start'][11:19]} {ev['trigger_set']} -> {ev['class_label']} ({ev['label_source']})")

# the operator disagrees with the model on the first event and relabels it
first = events[0]["id"]
post(f"/events/{first}/label", {"class": "step", "operator": "demo-operator"})
detail = get(f"/events/{first}")
print(f"\nafter labeling: event {first} carries {detail['class_label']!r} from {detail['label_source']!r}")
print("decision path of the model's original prediction:")
for step in detail["decision_path"]["steps"]:
    direction = "<" if step["went_left"] else ">="
    print(f"  feature[{step['feature_index']}] {direction} {step['threshold']:.3f}")

with urllib.request.urlopen(base + "/export/features.csv", timeout=10) as resp:
    export = resp.read().decode()
export_path = out_dir / "training_export.csv"
export_path.write_text(export)
print(f"\ntraining export ({export.count(chr(10)) - 1} rows) written to {export_path}")
print("train a fresh classifier on it with:")
print(f"  gridwatch classify --train {export_path} --folds 2 --print-tree")

server.stop()
pipeline.close()

"""
Querying the counting service over its HTTP API
===============================================

The service wraps one loaded model behind three endpoints:
POST /api/count, GET /api/health, GET /api/model.  This demo drives the
app in-process with a test client, so it runs without opening a port;
`textcount serve --checkpoint ...` exposes the same API over the network.
"""

import base64
import io

import numpy as np
from fastapi.testclient import TestClient
from PIL import Image

from textcount.inference import InferenceSettings
from textcount.service import create_app
from textcount.stub import StubConfig, UniformStubModel

# Stand up the app around a deterministic stub (a trained checkpoint
# would be loaded with textcount.checkpoint.load_checkpoint instead).
model = UniformStubModel(7.3, StubConfig(image_size=64, output_size=96))
app = create_app(model, model_id="demo-stub",
                 settings=InferenceSettings(working_height=96,
                                            window_side=96, stride=48))
client = TestClient(app)

print("health:", client.get("/api/health").json())

# Encode a PNG and POST it with a description of what to count.
rng = np.random.default_rng(0)
image = rng.integers(0, 256, (96, 96, 3), dtype=np.uint8)
buf = io.BytesIO()
Image.fromarray(image).save(buf, format="PNG")

resp = client.post("/api/count", json={
    "image_b64": base64.b64encode(buf.getvalue()).decode(),
    "description": "the marbles on the table",
})
body = resp.json()
print(f"count:         {body['count']:.3f}")
print(f"rounded_count: {body['rounded_count']}")
print(f"windows:       {body['window_counts']}")
print(f"elapsed:       {body['elapsed_ms']:.1f} ms")

# The overlay comes back base64-encoded; decode and save it.
png = base64.b64decode(body["overlay"])
with open("service_overlay_demo.png", "wb") as fh:
    fh.write(png)
print("wrote service_overlay_demo.png")

# Malformed requests return machine-readable errors, not stack traces.
bad = client.post("/api/count", json={"description": "missing the image"})
print("error body:", bad.status_code, bad.json())

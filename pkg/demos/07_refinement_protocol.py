# The text refinement protocol against a local stub endpoint: a fixed
# two-part prompt wraps each assessment, every request is a fresh
# single-turn conversation, responses split into the two factor sections,
# and the on-disk cache guarantees one network call per (prompt, model).

import json
import os
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from textcredit.refine import (
    EndpointConfig,
    RateLimiter,
    build_prompt,
    cached_refine,
    compose_variant,
    parse_sections,
)

CANNED = (
    "1. Factors supporting the borrower's repayment: The borrower keeps "
    "orderly books and repaid every previous loan on schedule. "
    "2. Factors that could potentially lead to the borrower's default: "
    "Receivables are concentrated on a single customer and may slow the cash flow."
)


class Handler(BaseHTTPRequestHandler):
    calls = 0

    def do_POST(self):
        Handler.calls += 1
        self.rfile.read(int(self.headers["Content-Length"]))
        body = json.dumps({"choices": [{"message": {"content": CANNED}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *a):
        pass


server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
threading.Thread(target=server.serve_forever, daemon=True).start()
os.environ.setdefault("REFINE_API_KEY", "demo-token")

prompt = build_prompt("The borrower runs a hardware stall with steady weekend trade.")
print("prompt starts:", prompt[:90], "...")
print("prompt ends:  ...", prompt[-70:])

cfg = EndpointConfig(
    base_url=f"http://127.0.0.1:{server.server_address[1]}",
    model="demo-model",
    rpm=60,
)
limiter = RateLimiter(cfg.rpm)


class Record:
    id = "L00001"
    human_text = "The borrower runs a hardware stall with steady weekend trade."


with tempfile.TemporaryDirectory() as cache_dir:
    first = cached_refine(cache_dir, cfg, Record, limiter=limiter)
    second = cached_refine(cache_dir, cfg, Record, limiter=limiter)
    print(f"\nnetwork calls: {Handler.calls} (second lookup from cache: "
          f"{second.retrieved_from_cache})")

sections = parse_sections(first.raw)
print("\npositive:", sections["positive"])
print("negative:", sections["negative"])
print("\nneg_pos variant:\n" + compose_variant(sections, "neg_pos"))
server.shutdown()

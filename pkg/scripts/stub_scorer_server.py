#!/usr/bin/env python3
"""Serve a stub scorer table over the model-server wire protocol.

Useful for exercising the remote-client path and the optional
real-backend smoke test without any model:

    python scripts/stub_scorer_server.py --table demo/stub_table.json --port 8421
    CHAINEVAL_NLI_ENDPOINT=http://127.0.0.1:8421 \\
    CHAINEVAL_LOGPROB_ENDPOINT=http://127.0.0.1:8421 \\
        pytest tests/test_acceptance.py -k criterion_7 -s

Requests: {"op": "nli", "premise", "hypothesis"} and
{"op": "logprob", "conditioning", "target"}.
"""

import argparse
import json
from http.server import BaseHTTPRequestHandler, HTTPServer

from chaineval.backends import StubScorerTable


def make_handler(table: StubScorerTable):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            try:
                request = json.loads(self.rfile.read(length))
                if request["op"] == "nli":
                    judgment = table.score(request["premise"], request["hypothesis"])
                    body = {
                        "entail": judgment.entail,
                        "neutral": judgment.neutral,
                        "contradict": judgment.contradict,
                    }
                elif request["op"] == "logprob":
                    body = {
                        "logprob_bits": table.logprob(
                            request["conditioning"], request["target"]
                        )
                    }
                else:
                    raise ValueError(f"unknown op {request.get('op')!r}")
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                self.send_error(400, str(exc))
                return
            payload = json.dumps(body).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, fmt, *args):
            pass

    return Handler


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--table", required=True, help="stub table JSON")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8421)
    args = parser.parse_args()

    table = StubScorerTable.from_file(args.table)
    server = HTTPServer((args.host, args.port), make_handler(table))
    print(f"serving stub scorer on http://{args.host}:{server.server_port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()

"""Shared fixtures: hand-built trees, backends, and a controllable HTTP stub."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from captree import MockBackend, SegmentNode, SegmentTree, mark_eligibility
from captree.captions import CaptionNode, TreeOfCaptions


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\n[ACCEPTANCE] {name}: {outcome}")


def manual_tree(video_id: str, spans, frame_duration: float = 1.0) -> SegmentTree:
    """Build a SegmentTree from nested (lo, hi, [children]) frame spans.

    Start/end seconds are lo/hi times ``frame_duration``. Eligibility
    flags are applied with the default thresholds.
    """
    nodes: dict[int, SegmentNode] = {}
    counter = iter(range(10_000))

    def visit(item, parent=None):
        if len(item) == 2:
            lo, hi, children = item[0], item[1], []
        else:
            lo, hi, children = item
        nid = next(counter)
        nodes[nid] = SegmentNode(
            id=nid,
            lo=lo,
            hi=hi,
            start_s=lo * frame_duration,
            end_s=hi * frame_duration,
            parent=parent,
        )
        child_ids = tuple(visit(c, nid) for c in children)
        nodes[nid].children = child_ids
        if child_ids:
            nodes[nid].merge_cost = 0.0
        return nid

    root = visit(spans)
    tree = SegmentTree(video_id=video_id, nodes=nodes, root=root, frame_duration_s=frame_duration)
    return mark_eligibility(tree)


def captioned(tree: SegmentTree, text_for=None) -> TreeOfCaptions:
    """Attach a simple caption to every caption-eligible node."""
    toc = TreeOfCaptions(tree=tree)
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        if not node.caption_eligible:
            continue
        kind = "frame" if node.caption_leaf else "video"
        text = text_for(node) if text_for else f"Caption for node {nid}."
        mid = (node.start_s + node.end_s) / 2
        toc.captions[nid] = CaptionNode(node_id=nid, kind=kind, text=text, source_frames=[mid])
    return toc


@pytest.fixture
def mock_backend():
    return MockBackend(dim=8, seed=7)


class _StubHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        self.server.requests.append((self.path, body))
        if self.server.responses:
            status, payload = self.server.responses.pop(0)
        else:
            status, payload = self.server.default_response
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload.encode("utf-8"))


class StubServer:
    """HTTP server whose next responses are scripted by the test."""

    def __init__(self):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self.httpd.requests = []
        self.httpd.responses = []
        self.httpd.default_response = (200, json.dumps({"text": "ok"}))
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    @property
    def requests(self):
        return self.httpd.requests

    def script(self, *responses: tuple[int, str]):
        self.httpd.responses = list(responses)

    def set_default(self, status: int, payload: str):
        self.httpd.default_response = (status, payload)

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()

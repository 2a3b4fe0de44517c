# SPDX-License-Identifier: Apache-2.0
"""Python access to the elfstore simulator and its building blocks."""

import json

from . import _elfstore
from ._elfstore import (
    BloomFilter,
    Error,
    Overlay,
    combined_reliability,
    reliability_satisfied,
    required_reliability,
)

__all__ = [
    "BloomFilter",
    "Client",
    "Cluster",
    "Error",
    "Overlay",
    "combined_reliability",
    "global_matrix",
    "reliability_satisfied",
    "required_reliability",
    "summarize_partition",
]


def summarize_partition(fog, edges):
    """edges: iterable of (edge_id, reliability, free_bytes)."""
    return json.loads(_elfstore.summarize_partition(fog, list(edges)))


def global_matrix(summaries, buckets=16):
    return json.loads(_elfstore.global_matrix(json.dumps(list(summaries)), buckets))


class Client:
    """A client running on one edge device, talking to that edge's fog."""

    def __init__(self, native):
        self._c = native

    @property
    def id(self):
        return self._c.id

    def create_stream(self, stream, reliability, static=None, dynamic=None):
        return self._c.create_stream(stream, static or {}, dynamic or {}, reliability)

    def open_stream(self, stream):
        return self._c.open_stream(stream)

    def close_stream(self, stream):
        self._c.close_stream(stream)

    def put_block(self, stream, block, data, props=None):
        return json.loads(self._c.put_block(stream, block, bytes(data), props or {}))

    def update_block(self, stream, block, data):
        self._c.update_block(stream, block, bytes(data))

    def get_block(self, stream, block):
        return self._c.get_block(stream, block)

    def find_block(self, query, exhaustive=False):
        return self._c.find_block(query, exhaustive)

    def stream_version(self, stream):
        return self._c.stream_version(stream)

    def update_stream_meta(self, stream, props, version):
        return self._c.update_stream_meta(stream, props, version)


class Cluster:
    """An in-process fog/edge cluster driven by the deterministic scheduler.

    Spec and workload keys match the command-line flags (fogs, edges_per_fog,
    seed, clients, blocks, ops, mix, ...).
    """

    def __init__(self, **spec):
        self._c = _elfstore.Cluster(json.dumps(spec))

    def run_workload(self, **workload):
        self._c.run_workload(json.dumps(workload))

    def fail_edge(self, edge=None):
        return self._c.fail_edge(edge)

    def await_recovery(self):
        return json.loads(self._c.await_recovery())

    def advance(self, rounds=1):
        self._c.advance(rounds)

    def audit(self, label="audit"):
        return json.loads(self._c.audit(label))

    def report(self):
        return json.loads(self._c.report())

    def report_table(self):
        return self._c.report_table()

    def edges(self):
        return [
            {"id": e, "fog": f, "reliability": r, "alive": alive}
            for e, f, r, alive in self._c.edges()
        ]

    def client(self, edge, client_id):
        return Client(self._c.client(edge, client_id))

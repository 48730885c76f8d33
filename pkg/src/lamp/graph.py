"""Pose-only topological graph: spatial subsampling, A* search, the
three-score node ranking, and top-k pruning with connectivity repair.

Edge weights are always the Euclidean distance between the endpoint
positions, which keeps the straight-line A* heuristic admissible.
"""

from __future__ import annotations

import csv
import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .field import FieldModel
from .geometry import Pose, pose_distance, quat_abs_dot

DEFAULT_WEIGHTS = (1.0, 1.0, 0.5)


class UnknownNodeError(KeyError):
    pass


@dataclass
class TopoGraph:
    nodes: dict[int, Pose] = field(default_factory=dict)
    adj: dict[int, dict[int, float]] = field(default_factory=dict)
    link_radius: float = 0.0

    def add_node(self, node_id: int, pose: Pose):
        self.nodes[node_id] = pose
        self.adj.setdefault(node_id, {})

    def add_edge(self, a: int, b: int):
        if a == b:
            raise ValueError("self-loops are not allowed")
        w = pose_distance(self.nodes[a], self.nodes[b])
        if w <= 0:
            raise ValueError(f"coincident nodes {a}, {b} cannot be linked")
        self.adj[a][b] = w
        self.adj[b][a] = w

    def n_nodes(self) -> int:
        return len(self.nodes)

    def n_edges(self) -> int:
        return sum(len(v) for v in self.adj.values()) // 2

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted((a, b) for a, nbrs in self.adj.items() for b in nbrs if a < b)

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def two_hop_neighborhood(self, v: int) -> set[int]:
        """Nodes reachable in one or two hops, excluding v itself."""
        if v not in self.nodes:
            raise UnknownNodeError(v)
        one = set(self.adj[v])
        two = set()
        for u in one:
            two.update(self.adj[u])
        out = one | two
        out.discard(v)
        return out

    def connected_components(self) -> list[set[int]]:
        seen: set[int] = set()
        comps = []
        for start in sorted(self.nodes):
            if start in seen:
                continue
            comp = {start}
            stack = [start]
            while stack:
                cur = stack.pop()
                for nbr in self.adj[cur]:
                    if nbr not in comp:
                        comp.add(nbr)
                        stack.append(nbr)
            seen |= comp
            comps.append(comp)
        return comps

    def subgraph(self, keep: set[int], link_radius: float | None = None) -> "TopoGraph":
        """Retained nodes re-linked by radius."""
        r = self.link_radius if link_radius is None else link_radius
        g = TopoGraph(link_radius=r)
        ids = sorted(keep)
        for i in ids:
            g.add_node(i, self.nodes[i])
        for ai, a in enumerate(ids):
            for b in ids[ai + 1 :]:
                dist = pose_distance(self.nodes[a], self.nodes[b])
                if 0 < dist <= r:
                    g.add_edge(a, b)
        return g

    def to_json(self) -> dict:
        return {
            "link_radius": self.link_radius,
            "nodes": [
                {"id": i, "t": self.nodes[i].t.tolist(), "q": self.nodes[i].q.tolist()}
                for i in sorted(self.nodes)
            ],
            "edges": [list(e) for e in self.edge_list()],
        }

    @staticmethod
    def from_json(data: dict) -> "TopoGraph":
        g = TopoGraph(link_radius=data["link_radius"])
        for n in data["nodes"]:
            g.add_node(n["id"], Pose(t=np.array(n["t"]), q=np.array(n["q"])))
        for a, b in data["edges"]:
            g.add_edge(a, b)
        return g


def build_graph(poses: np.ndarray, link_radius: float, min_separation: float | None = None) -> TopoGraph:
    """Spatially subsample pose rows and link nodes within link_radius.

    Poses are kept greedily in input order whenever they sit at least
    min_separation (default link_radius / 2) from every kept node.
    """
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    if poses.shape[0] == 0:
        raise ValueError("no poses to build a graph from")
    if min_separation is None:
        min_separation = link_radius / 2.0
    kept_pos: list[np.ndarray] = []
    g = TopoGraph(link_radius=link_radius)
    # grid hash so subsampling stays near-linear on large inputs
    cell = max(min_separation, 1e-9)
    buckets: dict[tuple[int, int], list[int]] = {}
    for row in poses:
        p = row[:3]
        key = (int(p[0] // cell), int(p[1] // cell))
        ok = True
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for j in buckets.get((key[0] + dx, key[1] + dy), ()):
                    if np.linalg.norm(kept_pos[j] - p) < min_separation:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if not ok:
            continue
        node_id = len(kept_pos)
        kept_pos.append(p.copy())
        buckets.setdefault(key, []).append(node_id)
        g.add_node(node_id, Pose(t=row[:3], q=row[3:7] / np.linalg.norm(row[3:7])))
    ids = sorted(g.nodes)
    pos = np.array([g.nodes[i].t for i in ids])
    for ai in range(len(ids)):
        dists = np.linalg.norm(pos[ai + 1 :] - pos[ai], axis=1)
        for off in np.nonzero((dists > 0) & (dists <= link_radius))[0]:
            g.add_edge(ids[ai], ids[ai + 1 + off])
    return g


# -- node scores ------------------------------------------------------------


def view_coverage_score(graph: TopoGraph, v: int) -> float:
    """1 minus the mean |quaternion dot| over the two-hop neighborhood.

    High when the node's orientation is novel among its neighbors;
    isolated nodes score 0.
    """
    nbrs = graph.two_hop_neighborhood(v)
    if not nbrs:
        return 0.0
    qv = graph.nodes[v].q
    dots = [quat_abs_dot(qv, graph.nodes[u].q) for u in sorted(nbrs)]
    return 1.0 - float(np.mean(dots))


def uncertainty_score(model: FieldModel, v_pose: Pose) -> float:
    """The field's predicted concentration at the node pose."""
    _, kappa = model.forward(v_pose)
    return kappa


def semantic_sensitivity_score(model: FieldModel, v_pose: Pose) -> float:
    """Pose-Jacobian norm of the mean direction; high at semantic borders."""
    return model.jacobian_norm(v_pose)


def _minmax(raw: np.ndarray) -> np.ndarray:
    lo, hi = raw.min(), raw.max()
    if hi - lo <= 0:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


@dataclass
class NodeScores:
    ids: list[int]
    s_vc: np.ndarray
    s_u: np.ndarray
    s_ss: np.ndarray
    s_vc_norm: np.ndarray
    s_u_norm: np.ndarray
    s_ss_norm: np.ndarray
    total: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                ["id", "s_vc", "s_u", "s_ss", "s_vc_norm", "s_u_norm", "s_ss_norm", "total"]
            )
            for i, nid in enumerate(self.ids):
                w.writerow(
                    [
                        nid,
                        repr(self.s_vc[i]),
                        repr(self.s_u[i]),
                        repr(self.s_ss[i]),
                        repr(self.s_vc_norm[i]),
                        repr(self.s_u_norm[i]),
                        repr(self.s_ss_norm[i]),
                        repr(self.total[i]),
                    ]
                )


def compute_scores(
    graph: TopoGraph,
    model: FieldModel,
    weights=DEFAULT_WEIGHTS,
    normalize_scores: bool = True,
) -> NodeScores:
    ids = sorted(graph.nodes)
    s_vc = np.array([view_coverage_score(graph, v) for v in ids])
    Mu, kappa = model.forward_batch(
        np.array([graph.nodes[v].as_vector() for v in ids])
    )
    s_u = np.asarray(kappa, dtype=float)
    s_ss = np.array([semantic_sensitivity_score(model, graph.nodes[v]) for v in ids])
    if normalize_scores:
        n_vc, n_u, n_ss = _minmax(s_vc), _minmax(s_u), _minmax(s_ss)
    else:
        n_vc, n_u, n_ss = s_vc, s_u, s_ss
    w1, w2, w3 = weights
    total = w1 * n_vc + w2 * n_u + w3 * n_ss
    return NodeScores(ids, s_vc, s_u, s_ss, n_vc, n_u, n_ss, total)


def _repair_connectivity(original: TopoGraph, retained: set[int]) -> set[int]:
    """Add bridging nodes along original shortest paths until the retained
    nodes of every original component are mutually reachable."""
    out = set(retained)
    for comp in original.connected_components():
        comp_retained = sorted(out & comp)
        if len(comp_retained) < 2:
            continue
        while True:
            sub = original.subgraph(out & comp)
            groups = [g for g in sub.connected_components() if g]
            if len(groups) <= 1:
                break
            # bridge the two groups whose representatives are graph-closest
            best = None
            base = groups[0]
            for other in groups[1:]:
                for a in sorted(base):
                    for b in sorted(other):
                        path, length = astar(original, a, b)
                        if path is None:
                            continue
                        if best is None or length < best[0]:
                            best = (length, path)
            if best is None:
                break  # original component itself was disconnected
            out.update(best[1])
    return out


def score_and_sample(
    graph: TopoGraph,
    model: FieldModel,
    weights=DEFAULT_WEIGHTS,
    keep_fraction: float = 0.3,
    normalize_scores: bool = True,
) -> tuple[TopoGraph, NodeScores]:
    """Rank nodes by weighted score, keep the top fraction, repair links.

    Ties break toward the lower node id. The retained subgraph is re-linked
    at the original radius; if that disconnects nodes that were connected
    before pruning, bridging nodes along original shortest paths come back.
    """
    if not (0.0 < keep_fraction <= 1.0):
        raise ValueError("keep_fraction must be in (0, 1]")
    if not graph.nodes:
        raise ValueError("empty graph")
    scores = compute_scores(graph, model, weights, normalize_scores)
    n_keep = int(np.ceil(keep_fraction * len(scores.ids)))
    order = sorted(
        range(len(scores.ids)), key=lambda i: (-scores.total[i], scores.ids[i])
    )
    retained = {scores.ids[i] for i in order[:n_keep]}
    retained = _repair_connectivity(graph, retained)
    return graph.subgraph(retained), scores


# -- search -----------------------------------------------------------------


def astar(graph: TopoGraph, start: int, goal: int, expanded: list | None = None):
    """Minimal-weight path with the straight-line-distance heuristic.

    Returns (node id list, length) or (None, inf) when disconnected. The
    optional `expanded` list collects (node, g) pairs for admissibility
    checks in tests.
    """
    if start not in graph.nodes:
        raise UnknownNodeError(start)
    if goal not in graph.nodes:
        raise UnknownNodeError(goal)
    goal_pose = graph.nodes[goal]
    h0 = pose_distance(graph.nodes[start], goal_pose)
    open_heap = [(h0, start, 0.0)]
    g_best = {start: 0.0}
    parent = {start: None}
    closed: set[int] = set()
    while open_heap:
        f, cur, g = heapq.heappop(open_heap)
        if cur in closed:
            continue
        closed.add(cur)
        if expanded is not None:
            expanded.append((cur, g))
        if cur == goal:
            path = []
            node = cur
            while node is not None:
                path.append(node)
                node = parent[node]
            return path[::-1], g
        for nbr in sorted(graph.adj[cur]):
            ng = g + graph.adj[cur][nbr]
            if nbr not in g_best or ng < g_best[nbr] - 1e-12:
                g_best[nbr] = ng
                parent[nbr] = cur
                h = pose_distance(graph.nodes[nbr], goal_pose)
                heapq.heappush(open_heap, (ng + h, nbr, ng))
    return None, float("inf")


def path_length(graph: TopoGraph, path: list[int]) -> float:
    return sum(graph.adj[a][b] for a, b in zip(path, path[1:]))

"""Two-stage navigation on top of the field and the graph: pick the most
goal-similar node, A* to it, then Adam-ascend a pose correction that trades
goal similarity against distance from the best sampled candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .field import FieldModel
from .geometry import Pose, cosine_sim, normalize, perturb_pose, pose_distance
from .graph import TopoGraph, astar


@dataclass(frozen=True)
class RefineConfig:
    n_candidates: int = 64
    sigma_pos: float = 2.0
    sigma_yaw: float = np.pi
    lambda_dist: float = 5.0
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_steps: int = 200
    tolerance: float = 1e-5

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.lambda_dist < 0:
            raise ValueError("lambda_dist must be non-negative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class PlanResult:
    status: str  # ok | no_path | refine_diverged
    coarse_goal_node: int | None = None
    coarse_similarity: float = float("nan")
    coarse_path: list[int] = field(default_factory=list)
    coarse_path_length: float = float("nan")
    x_c: Pose | None = None
    x_best: Pose | None = None
    x_goal: Pose | None = None
    trace: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        def pose_json(p):
            return None if p is None else {"t": p.t.tolist(), "q": p.q.tolist()}

        return {
            "status": self.status,
            "coarse_goal_node": self.coarse_goal_node,
            "coarse_similarity": self.coarse_similarity,
            "coarse_path": self.coarse_path,
            "coarse_path_length": self.coarse_path_length,
            "x_c": pose_json(self.x_c),
            "x_best": pose_json(self.x_best),
            "x_goal": pose_json(self.x_goal),
            "trace": self.trace,
        }


def coarse_goal(model: FieldModel, graph: TopoGraph, z_goal: np.ndarray) -> tuple[int, float]:
    """Node whose predicted embedding best matches the goal (lowest id wins ties)."""
    if not graph.nodes:
        raise ValueError("empty graph")
    ids = sorted(graph.nodes)
    Mu, _ = model.forward_batch(np.array([graph.nodes[v].as_vector() for v in ids]))
    sims = Mu @ np.asarray(z_goal, dtype=float)
    best = int(np.argmax(sims))  # argmax takes the first (lowest id) maximum
    return ids[best], float(sims[best])


def plan_coarse(graph: TopoGraph, start: int, goal: int):
    return astar(graph, start, goal)


def node_similarities(model: FieldModel, graph: TopoGraph, z_goal: np.ndarray) -> dict[int, float]:
    ids = sorted(graph.nodes)
    Mu, _ = model.forward_batch(np.array([graph.nodes[v].as_vector() for v in ids]))
    sims = Mu @ np.asarray(z_goal, dtype=float)
    return dict(zip(ids, sims.tolist()))


def select_best_candidate(
    model: FieldModel,
    x_c: Pose,
    z_goal: np.ndarray,
    cfg: RefineConfig,
    rng: np.random.Generator,
) -> Pose:
    """Best of {x_c} plus n_candidates perturbed poses, by predicted similarity."""
    candidates = [x_c] + [
        perturb_pose(x_c, cfg.sigma_pos, cfg.sigma_yaw, rng)
        for _ in range(cfg.n_candidates)
    ]
    X = np.array([c.as_vector() for c in candidates])
    Mu, _ = model.forward_batch(X)
    sims = Mu @ np.asarray(z_goal, dtype=float)
    return candidates[int(np.argmax(sims))]


def _similarity(model: FieldModel, pose: Pose, z_goal) -> float:
    mu, _ = model.forward(pose)
    return cosine_sim(mu, z_goal)


def _apply_correction(x_c: Pose, delta: np.ndarray) -> Pose:
    v = x_c.as_vector() + delta
    return Pose(t=v[:3], q=normalize(v[3:7]))


def refine(
    model: FieldModel,
    x_c: Pose,
    x_best: Pose,
    z_goal: np.ndarray,
    cfg: RefineConfig,
    clamp_box: np.ndarray | None = None,
) -> tuple[Pose, list[dict], str]:
    """Adam ascent of sim(F(x_c + dx), z_goal) - lambda * dist(x_best, x_c + dx).

    The quaternion block is renormalized after every step and the gradient
    accounts for that renormalization. Positions clamp to `clamp_box`
    ((3, 2), already inflated by the caller) when given. Returns the
    best-objective pose seen along the ascent (Adam's fixed-scale steps
    oscillate around optima, so the last iterate can sit at an arbitrary
    phase of that oscillation), a per-step trace, and a status string.
    """
    z_goal = np.asarray(z_goal, dtype=float)
    # start the ascent at the best sampled candidate: the penalty is anchored
    # there, and a cold start at x_c makes the first fixed-scale Adam step
    # kick the quaternion off the similarity ridge before the penalty can act
    delta = x_best.as_vector() - x_c.as_vector()
    m = np.zeros(7)
    v = np.zeros(7)
    trace: list[dict] = []
    status = "ok"
    pose = x_c
    best_pose = x_c
    best_objective = -np.inf
    for step in range(1, cfg.max_steps + 1):
        raw = x_c.as_vector() + delta
        qn = float(np.linalg.norm(raw[3:7]))
        pose = Pose(t=raw[:3], q=raw[3:7] / qn)
        sim = _similarity(model, pose, z_goal)
        dist = pose_distance(x_best, pose)
        objective = sim - cfg.lambda_dist * dist
        trace.append(
            {
                "step": step,
                "sim": sim,
                "dist": dist,
                "objective": objective,
                "pose": pose.as_vector().tolist(),
            }
        )
        if not np.isfinite(objective):
            return best_pose, trace, "refine_diverged"
        if objective > best_objective:
            best_objective = objective
            best_pose = pose
        g_pose = model.pose_gradient(pose, z_goal)
        # distance term: subgradient 0 at coincidence
        diff = pose.t - x_best.t
        nd = np.linalg.norm(diff)
        g_dist = np.zeros(7)
        if nd > 0:
            g_dist[:3] = cfg.lambda_dist * diff / nd
        grad = g_pose.copy()
        # chain the quaternion renormalization into the correction gradient
        q = pose.q
        gq = g_pose[3:7]
        grad[3:7] = (gq - q * (q @ gq)) / qn
        grad -= g_dist
        m = cfg.beta1 * m + (1 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
        mhat = m / (1 - cfg.beta1**step)
        vhat = v / (1 - cfg.beta2**step)
        update = cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)
        delta = delta + update  # ascent
        if clamp_box is not None:
            pos = x_c.t + delta[:3]
            delta[:3] = np.clip(pos, clamp_box[:, 0], clamp_box[:, 1]) - x_c.t
        if np.linalg.norm(update) < cfg.tolerance:
            break
    # final iterate, in case the last update improved on everything seen
    raw = x_c.as_vector() + delta
    pose = Pose(t=raw[:3], q=normalize(raw[3:7]))
    objective = _similarity(model, pose, z_goal) - cfg.lambda_dist * pose_distance(x_best, pose)
    if np.isfinite(objective) and objective > best_objective:
        best_pose = pose
    return best_pose, trace, status


def inflated_box(bounds3: np.ndarray, factor: float = 0.1) -> np.ndarray:
    """World box grown by `factor` of its span on every side."""
    span = bounds3[:, 1] - bounds3[:, 0]
    out = bounds3.copy()
    out[:, 0] -= factor * span
    out[:, 1] += factor * span
    return out


def nearest_node(graph: TopoGraph, pose: Pose) -> int:
    ids = sorted(graph.nodes)
    dists = [pose_distance(graph.nodes[i], pose) for i in ids]
    return ids[int(np.argmin(dists))]


def plan(
    model: FieldModel,
    graph: TopoGraph,
    x_init: Pose,
    z_goal: np.ndarray,
    cfg: RefineConfig,
    seed: int = 0,
    clamp_box: np.ndarray | None = None,
) -> PlanResult:
    """Full coarse-to-fine pipeline; deterministic given the seed."""
    if not graph.nodes:
        raise ValueError("empty graph")
    start = nearest_node(graph, x_init)
    goal_node, sim = coarse_goal(model, graph, z_goal)
    path, length = plan_coarse(graph, start, goal_node)
    result = PlanResult(
        status="ok",
        coarse_goal_node=goal_node,
        coarse_similarity=sim,
    )
    if path is None:
        result.status = "no_path"
        return result
    result.coarse_path = path
    result.coarse_path_length = length
    x_c = graph.nodes[goal_node]
    result.x_c = x_c
    rng = np.random.default_rng(seed)
    x_best = select_best_candidate(model, x_c, z_goal, cfg, rng)
    result.x_best = x_best
    x_goal, trace, status = refine(model, x_c, x_best, z_goal, cfg, clamp_box)
    result.x_goal = x_goal
    result.trace = trace
    result.status = status
    return result

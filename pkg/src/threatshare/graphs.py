"""Event graphs over temporal windows of SPADL actions.

One graph per event: its nodes are every player touching the ball in the
current action or the ``k`` before it, and each action in that window
contributes one directed edge from actor to recipient (or a self-edge when
nobody receives). The SPADL interchange rows carry no receiver column, so
recipients are recovered the standard way: a successful pass-like action
whose next action belongs to the same team and a different player passes
to that player.

Node features are the per-90 normalized season statistics; edge features
are a fixed 10-slot layout mixing what happened (type, result, geometry)
with when (match clock, gap to the window's newest action) and how much it
mattered (end-zone threat and its change).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from threatshare.ingest import SPADL_ACTION_TYPES, SpadlAction
from threatshare.xt import XtGrid, XtLabel, label_stream, xt_of

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

MAX_NODES = 22
NODE_FEATURE_DIM = 10
EDGE_FEATURE_DIM = 10

HALF_NOMINAL_S = 2700.0
MATCH_NOMINAL_S = 5400.0
DT_CLIP_S = 60.0

PASS_LIKE_SPADL = frozenset(
    {
        "pass",
        "cross",
        "throw_in",
        "freekick_crossed",
        "freekick_short",
        "corner_crossed",
        "corner_short",
    }
)

ROLE_CODES = {"GK": 0, "DF": 1, "MF": 2, "FW": 3}
ROLE_UNKNOWN = 4
N_ROLES = 5

_TYPE_INDEX = {t: i for i, t in enumerate(SPADL_ACTION_TYPES)}


@dataclass(frozen=True)
class EdgeFeature:
    """Fixed-layout description of one in-window interaction."""

    event_type_code: float  # type index / vocabulary size
    result_code: float  # 1 success, 0 fail
    start_x: float  # coordinates normalized to [0, 1]
    start_y: float
    end_x: float
    end_y: float
    xt_value: float
    delta_xt: float
    t_since_start: float  # match clock / 5400
    dt_prev: float  # gap to the window's newest action, clipped at 60 s

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.event_type_code,
                self.result_code,
                self.start_x,
                self.start_y,
                self.end_x,
                self.end_y,
                self.xt_value,
                self.delta_xt,
                self.t_since_start,
                self.dt_prev,
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class EdgeContext:
    """Window timing plus the action's labeled threat change."""

    latest_match_time_s: float
    delta_xt: float


def match_clock_s(action: SpadlAction) -> float:
    """Approximate seconds since kickoff from the 12 SPADL attributes."""
    return (action.period - 1) * HALF_NOMINAL_S + action.time_s


def encode_edge(action: SpadlAction, ctx: EdgeContext, grid: XtGrid) -> EdgeFeature:
    """Encode one action into the 10-slot edge layout."""
    gap = max(0.0, ctx.latest_match_time_s - match_clock_s(action))
    return EdgeFeature(
        event_type_code=_TYPE_INDEX[action.action_type] / len(SPADL_ACTION_TYPES),
        result_code=1.0 if action.result == "success" else 0.0,
        start_x=action.start_x / 105.0,
        start_y=action.start_y / 68.0,
        end_x=action.end_x / 105.0,
        end_y=action.end_y / 68.0,
        xt_value=xt_of(grid, (action.end_x, action.end_y)),
        delta_xt=ctx.delta_xt,
        t_since_start=match_clock_s(action) / MATCH_NOMINAL_S,
        dt_prev=min(gap, DT_CLIP_S) / DT_CLIP_S,
    )


@dataclass
class EventGraph:
    """One labeled event graph (players as nodes, interactions as edges)."""

    event_id: str
    node_ids: list  # sorted player ids
    node_features: np.ndarray  # (n, d)
    adjacency: np.ndarray  # row-normalized (indicators + self-loops); row = destination
    edge_list: list  # (src_idx, dst_idx) per in-window interaction
    edge_features: np.ndarray  # (n_edges, 10)
    label: float
    node_xy: np.ndarray  # (n, 2) latest touch location, normalized
    node_roles: np.ndarray  # (n,) role codes; 4 = unknown
    cross_team: bool
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def validate(self) -> None:
        n = self.n_nodes
        if n == 0 or n > MAX_NODES:
            raise ValueError(f"graph {self.event_id}: {n} nodes")
        if self.node_features.shape[0] != n:
            raise ValueError(f"graph {self.event_id}: feature/node count mismatch")
        if not np.all(np.isfinite(self.node_features)):
            raise ValueError(f"graph {self.event_id}: non-finite node features")
        if not np.isfinite(self.label):
            raise ValueError(f"graph {self.event_id}: non-finite label")
        if self.edge_features.shape != (len(self.edge_list), EDGE_FEATURE_DIM):
            raise ValueError(f"graph {self.event_id}: edge feature shape")


def normalized_adjacency(n: int, edge_list) -> np.ndarray:
    """Row-normalize directed indicators plus self-loops; rows index the
    destination node, so information flows along the pass direction."""
    a = np.eye(n)
    for src, dst in edge_list:
        a[dst, src] = 1.0
    return a / a.sum(axis=1, keepdims=True)


def infer_recipients(actions) -> list:
    """Recipient player id per action, or None. Stream-adjacency rule."""
    recipients: list = [None] * len(actions)
    for i, a in enumerate(actions):
        if (
            a.action_type in PASS_LIKE_SPADL
            and a.result == "success"
            and i + 1 < len(actions)
        ):
            nxt = actions[i + 1]
            if nxt.team_id == a.team_id and nxt.player_id != a.player_id:
                recipients[i] = nxt.player_id
    return recipients


def build_graph(
    actions,
    index: int,
    k: int,
    stats: dict,
    *,
    labels=None,
    grid: XtGrid = None,
    roles: dict | None = None,
    extra_node_features: dict | None = None,
) -> EventGraph:
    """Build the graph for the event at ``index`` over a window of k prior
    actions (clamped at the stream start).

    ``stats`` maps player id to the d=10 feature vector; players without an
    entry are imputed with the population mean and counted in meta.
    ``labels`` must align 1:1 with ``actions`` (computed via
    :func:`threatshare.xt.label_stream` when omitted).
    """
    actions = list(actions)
    if not 0 <= index < len(actions):
        raise IndexError(f"event index {index} outside stream of {len(actions)}")
    if k < 0:
        raise ValueError("window size k must be >= 0")
    if labels is None:
        if grid is None:
            raise ValueError("build_graph needs labels or a grid to compute them")
        labels = label_stream(actions, grid)

    lo = max(0, index - k)
    window = list(range(lo, index + 1))
    recipients = infer_recipients(actions)

    participants = set()
    for i in window:
        participants.add(actions[i].player_id)
        if recipients[i] is not None:
            participants.add(recipients[i])
    node_ids = sorted(participants)
    node_index = {pid: j for j, pid in enumerate(node_ids)}

    if stats:
        population = np.array(list(stats.values()), dtype=np.float64)
        mean_vec = population.mean(axis=0)
        feat_dim = population.shape[1]
    else:
        feat_dim = NODE_FEATURE_DIM
        mean_vec = np.zeros(feat_dim)
    features = np.zeros((len(node_ids), feat_dim))
    imputed = 0
    for pid, j in node_index.items():
        vec = stats.get(pid)
        if vec is None:
            features[j] = mean_vec
            imputed += 1
        else:
            features[j] = np.asarray(vec, dtype=np.float64)
    if extra_node_features:
        extra_dim = len(next(iter(extra_node_features.values())))
        extra = np.zeros((len(node_ids), extra_dim))
        for pid, j in node_index.items():
            if pid in extra_node_features:
                extra[j] = np.asarray(extra_node_features[pid], dtype=np.float64)
        features = np.hstack([features, extra])

    latest = max(match_clock_s(actions[i]) for i in window)
    edge_list = []
    edge_rows = []
    node_xy = np.zeros((len(node_ids), 2))
    for i in window:
        a = actions[i]
        src = node_index[a.player_id]
        dst = node_index[recipients[i]] if recipients[i] is not None else src
        edge_list.append((src, dst))
        edge_rows.append(encode_edge_from_label(a, latest, labels[i]).as_vector())
        # latest touch wins: actor at the action end, recipient at the pass end
        node_xy[src] = (a.end_x / 105.0, a.end_y / 68.0)
        node_xy[dst] = (a.end_x / 105.0, a.end_y / 68.0)

    role_codes = np.full(len(node_ids), ROLE_UNKNOWN, dtype=np.int64)
    if roles:
        for pid, j in node_index.items():
            role_codes[j] = ROLE_CODES.get(str(roles.get(pid, "")).upper(), ROLE_UNKNOWN)

    graph = EventGraph(
        event_id=labels[index].event_id,
        node_ids=node_ids,
        node_features=features,
        adjacency=normalized_adjacency(len(node_ids), edge_list),
        edge_list=edge_list,
        edge_features=np.array(edge_rows),
        label=labels[index].delta_xt,
        node_xy=node_xy,
        node_roles=role_codes,
        cross_team=labels[index].cross_team,
        meta={
            "match_id": actions[index].game_id,
            "event_index": index,
            "k": k,
            "n_imputed": imputed,
            "actor_id": actions[index].player_id,
        },
    )
    graph.validate()
    return graph


def encode_edge_from_label(action: SpadlAction, latest: float, label: XtLabel) -> EdgeFeature:
    """Edge encoding when per-action xT values were already computed."""
    gap = max(0.0, latest - match_clock_s(action))
    return EdgeFeature(
        event_type_code=_TYPE_INDEX[action.action_type] / len(SPADL_ACTION_TYPES),
        result_code=1.0 if action.result == "success" else 0.0,
        start_x=action.start_x / 105.0,
        start_y=action.start_y / 68.0,
        end_x=action.end_x / 105.0,
        end_y=action.end_y / 68.0,
        xt_value=label.xt_value,
        delta_xt=label.delta_xt,
        t_since_start=match_clock_s(action) / MATCH_NOMINAL_S,
        dt_prev=min(gap, DT_CLIP_S) / DT_CLIP_S,
    )


def build_match_graphs(actions, k, stats, grid, roles=None, extra_node_features=None):
    """One graph per event of a single match stream."""
    labels = label_stream(actions, grid)
    return [
        build_graph(
            actions,
            i,
            k,
            stats,
            labels=labels,
            grid=grid,
            roles=roles,
            extra_node_features=extra_node_features,
        )
        for i in range(len(actions))
    ]


def split_dataset(graphs, split_frac: float, seed: int, unit: str = "graph"):
    """Deterministic shuffle + split; train size rounds up.

    ``unit="match"`` assigns whole matches so no match straddles the split.
    """
    graphs = list(graphs)
    if not graphs:
        raise ValueError("split_dataset: empty corpus")
    if not 0.0 < split_frac < 1.0:
        raise ValueError(f"split_frac must be in (0, 1), got {split_frac}")
    rng = np.random.default_rng([seed, 0x5EED])
    if unit == "graph":
        order = rng.permutation(len(graphs))
        n_train = int(np.ceil(len(graphs) * split_frac))
        train_idx = sorted(order[:n_train].tolist())
        val_idx = sorted(order[n_train:].tolist())
        return [graphs[i] for i in train_idx], [graphs[i] for i in val_idx]
    if unit == "match":
        matches = sorted({g.meta["match_id"] for g in graphs})
        order = rng.permutation(len(matches))
        n_train = int(np.ceil(len(matches) * split_frac))
        train_matches = {matches[i] for i in order[:n_train]}
        train = [g for g in graphs if g.meta["match_id"] in train_matches]
        val = [g for g in graphs if g.meta["match_id"] not in train_matches]
        return train, val
    raise ValueError(f"unknown split unit {unit!r}")


def make_dataset(
    matches: dict,
    k: int,
    stats: dict,
    grid: XtGrid,
    split_frac: float = 0.8,
    seed: int = 0,
    *,
    unit: str = "graph",
    roles=None,
):
    """Graphs for every event of every match, split into (train, val)."""
    graphs = []
    for match_id in sorted(matches):
        graphs.extend(build_match_graphs(matches[match_id], k, stats, grid, roles=roles))
    return split_dataset(graphs, split_frac, seed, unit=unit)


def batch(graphs, batch_size: int):
    """Order-preserving chunks; each graph is processed independently."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    graphs = list(graphs)
    return [graphs[i : i + batch_size] for i in range(0, len(graphs), batch_size)]


# ── persistence ───────────────────────────────────────────────────────────


def write_graphs(graphs, path) -> None:
    """One EventGraph per line; adjacency is rebuilt from edges on load."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for g in graphs:
            record = {
                "schema_version": SCHEMA_VERSION,
                "event_id": g.event_id,
                "node_ids": list(g.node_ids),
                "node_features": g.node_features.tolist(),
                "edge_list": [list(e) for e in g.edge_list],
                "edge_features": g.edge_features.tolist(),
                "label": g.label,
                "node_xy": g.node_xy.tolist(),
                "node_roles": g.node_roles.tolist(),
                "cross_team": g.cross_team,
                "meta": g.meta,
            }
            f.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
            f.write("\n")


def read_graphs(path) -> list[EventGraph]:
    graphs = []
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            version = d.get("schema_version")
            if version != SCHEMA_VERSION:
                raise ValueError(f"{path}:{line_no}: schema version {version}")
            edge_list = [tuple(e) for e in d["edge_list"]]
            n = len(d["node_ids"])
            g = EventGraph(
                event_id=d["event_id"],
                node_ids=list(d["node_ids"]),
                node_features=np.array(d["node_features"], dtype=np.float64),
                adjacency=normalized_adjacency(n, edge_list),
                edge_list=edge_list,
                edge_features=np.array(d["edge_features"], dtype=np.float64).reshape(
                    len(edge_list), EDGE_FEATURE_DIM
                ),
                label=float(d["label"]),
                node_xy=np.array(d["node_xy"], dtype=np.float64).reshape(n, 2),
                node_roles=np.array(d["node_roles"], dtype=np.int64),
                cross_team=bool(d["cross_team"]),
                meta=d["meta"],
            )
            g.validate()
            graphs.append(g)
    return graphs

"""Immutable extensive-form game trees with imperfect recall.

A game is a finite rooted tree of decision, chance and leaf nodes together
with per-player information-set partitions over the decision nodes.  Node
ids are derived from the path of action labels ("/" joined, root is "/"),
so action labels may not contain "/".  Action labels are globally unique
strings except that the nodes of one information set share their labels;
this makes an action identify its information set.

Utilities and chance probabilities are parsed exactly (Fraction) and
exposed as floats at the solver boundary.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

CHANCE = 0
PLAYERS = (1, 2)

Seq = tuple[str, ...]
EMPTY_SEQ: Seq = ()


class GameError(Exception):
    pass


class AbsentmindedInput(GameError):
    """Raised when an operation requires a player without absentmindedness."""


class RecallClass(Enum):
    PERFECT_RECALL = "PerfectRecall"
    A_LOSS_RECALL = "ALossRecall"
    GENERAL_IMPERFECT_RECALL = "GeneralImperfectRecall"
    ABSENTMINDED = "Absentminded"


def parse_exact(value) -> Fraction:
    """Parse a utility or probability given as int, decimal string or p/q."""
    if isinstance(value, bool):
        raise GameError(f"not a number: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise GameError(f"cannot parse exact number from {value!r}") from exc
    raise GameError(f"cannot parse exact number from {value!r}")


def format_exact(value: Fraction) -> str:
    """Canonical string for an exact value: shortest decimal, else p/q."""
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives)
    scaled = value.numerator * 10**digits // value.denominator
    sign = "-" if scaled < 0 else ""
    text = str(abs(scaled)).rjust(digits + 1, "0")
    whole, frac = text[:-digits], text[-digits:]
    frac = frac.rstrip("0")
    return f"{sign}{whole}.{frac}" if frac else f"{sign}{whole}"


@dataclass(frozen=True)
class Node:
    id: str
    player: int | None  # 1, 2, CHANCE; None for leaves
    actions: tuple[str, ...]  # sorted child action labels, empty for leaves
    children: tuple[str, ...]  # child node ids aligned with actions
    utility: Fraction | None  # leaf payoff for player 1
    probs: tuple[Fraction, ...] | None  # chance distribution aligned with actions

    @property
    def is_leaf(self) -> bool:
        return self.player is None

    @property
    def is_chance(self) -> bool:
        return self.player == CHANCE


@dataclass(frozen=True)
class InfoSet:
    id: str
    player: int
    nodes: tuple[str, ...]  # members in tree preorder
    actions: tuple[str, ...]  # action labels of the first member


@dataclass(frozen=True)
class Violation:
    code: str
    where: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(f"[{v.code}] {v.where}: {v.message}" for v in self.violations)


class Game:
    """Immutable EFG. Build with :func:`build_game`; do not mutate."""

    __slots__ = (
        "nodes",
        "root",
        "preorder",
        "parent",
        "leaves",
        "infosets",
        "node_infoset",
        "action_infoset",
        "_chance_reach",
        "_own_seq",
        "_infosets_spec",
    )

    def __init__(self, nodes, root, preorder, parent, leaves, infosets,
                 node_infoset, action_infoset, chance_reach, own_seq,
                 infosets_spec):
        self.nodes: dict[str, Node] = nodes
        self.root: str = root
        self.preorder: tuple[str, ...] = preorder
        self.parent: dict[str, tuple[str, str] | None] = parent
        self.leaves: tuple[str, ...] = leaves
        self.infosets: dict[str, InfoSet] = infosets
        self.node_infoset: dict[str, str] = node_infoset
        self.action_infoset: dict[str, str] = action_infoset
        self._chance_reach: dict[str, Fraction] = chance_reach
        self._own_seq: dict[int, dict[str, Seq]] = own_seq
        self._infosets_spec = infosets_spec  # raw member lists per player (for io)

    # -- structure queries -------------------------------------------------

    def node(self, node_id: str) -> Node:
        return self.nodes[node_id]

    def children_of(self, node_id: str) -> Iterator[tuple[str, str]]:
        n = self.nodes[node_id]
        return zip(n.actions, n.children)

    def chance_reach(self, node_id: str) -> float:
        return float(self._chance_reach[node_id])

    def chance_reach_exact(self, node_id: str) -> Fraction:
        return self._chance_reach[node_id]

    def utility(self, leaf_id: str) -> float:
        u = self.nodes[leaf_id].utility
        if u is None:
            raise GameError(f"{leaf_id} is not a leaf")
        return float(u)

    def own_sequence(self, player: int, node_id: str) -> Seq:
        """Ordered own actions of `player` on the path from root to node."""
        return self._own_seq[player][node_id]

    def player_infosets(self, player: int) -> tuple[InfoSet, ...]:
        return tuple(s for s in self.infosets.values() if s.player == player)

    def decision_nodes(self, player: int) -> tuple[str, ...]:
        return tuple(n for n in self.preorder if self.nodes[n].player == player)

    def infoset_of_node(self, node_id: str) -> InfoSet | None:
        sid = self.node_infoset.get(node_id)
        return self.infosets[sid] if sid is not None else None

    def is_ancestor(self, anc: str, desc: str) -> bool:
        cur = self.parent[desc]
        while cur is not None:
            if cur[0] == anc:
                return True
            cur = self.parent[cur[0]]
        return False

    def max_depth(self) -> int:
        depth = {self.root: 0}
        best = 0
        for nid in self.preorder[1:]:
            depth[nid] = depth[self.parent[nid][0]] + 1
            best = max(best, depth[nid])
        return best


ROOT_ID = "/"


def _child_id(parent_id: str, action: str) -> str:
    return action if parent_id == ROOT_ID else f"{parent_id}/{action}"


def _norm_child_id(parent_id: str, action: str) -> str:
    # root children get ids without the leading slash for readability
    return _child_id(parent_id, action)


def build_game(tree: Mapping, infosets: Mapping | None = None) -> Game:
    """Construct a Game from a nested tree spec and info-set member lists.

    `tree` uses the JSON shape: leaves are {"leaf": value}; decision nodes
    {"player": 1|2, "children": {action: subtree}}; chance nodes
    {"player": "chance", "probs": {action: value}, "children": ...}.
    `infosets` maps player keys ("1"/"2" or ints) to lists of node-id lists.
    Decision nodes not mentioned become singleton information sets.

    Structural problems (bad shapes, duplicate actions within a node,
    unknown ids) raise GameError; semantic invariant violations are left
    for :func:`validate_game` to report.
    """
    nodes: dict[str, Node] = {}
    preorder: list[str] = []
    parent: dict[str, tuple[str, str] | None] = {ROOT_ID: None}
    leaves: list[str] = []
    chance_reach: dict[str, Fraction] = {ROOT_ID: Fraction(1)}
    own_seq: dict[int, dict[str, Seq]] = {1: {}, 2: {}}

    def walk(spec: Mapping, node_id: str, seqs: tuple[Seq, Seq]) -> None:
        own_seq[1][node_id] = seqs[0]
        own_seq[2][node_id] = seqs[1]
        preorder.append(node_id)
        if not isinstance(spec, Mapping):
            raise GameError(f"node {node_id}: spec must be a mapping")
        if "leaf" in spec:
            nodes[node_id] = Node(node_id, None, (), (), parse_exact(spec["leaf"]), None)
            leaves.append(node_id)
            return
        raw_player = spec.get("player")
        if raw_player == "chance":
            player = CHANCE
        elif raw_player in (1, 2, "1", "2"):
            player = int(raw_player)
        else:
            raise GameError(f"node {node_id}: bad player {raw_player!r}")
        children = spec.get("children")
        if not isinstance(children, Mapping) or not children:
            raise GameError(f"node {node_id}: decision/chance node needs children")
        actions = tuple(sorted(children))
        for a in actions:
            if not a or "/" in a:
                raise GameError(f"node {node_id}: bad action label {a!r}")
        probs: tuple[Fraction, ...] | None = None
        if player == CHANCE:
            raw = spec.get("probs")
            if not isinstance(raw, Mapping) or set(raw) != set(actions):
                raise GameError(f"node {node_id}: chance probs must cover actions")
            probs = tuple(parse_exact(raw[a]) for a in actions)
        child_ids = tuple(_norm_child_id(node_id, a) for a in actions)
        nodes[node_id] = Node(node_id, player, actions, child_ids, None, probs)
        for idx, (a, cid) in enumerate(zip(actions, child_ids)):
            parent[cid] = (node_id, a)
            reach = chance_reach[node_id]
            if player == CHANCE:
                reach = reach * probs[idx]
            chance_reach[cid] = reach
            child_seqs = (
                seqs[0] + (a,) if player == 1 else seqs[0],
                seqs[1] + (a,) if player == 2 else seqs[1],
            )
            walk(children[a], cid, child_seqs)

    walk(tree, ROOT_ID, (EMPTY_SEQ, EMPTY_SEQ))

    # information sets: stated groups first, then implicit singletons
    infosets = infosets or {}
    preorder_pos = {nid: i for i, nid in enumerate(preorder)}
    built: dict[str, InfoSet] = {}
    node_infoset: dict[str, str] = {}
    action_infoset: dict[str, str] = {}
    stated: dict[int, list[list[str]]] = {1: [], 2: []}
    for key, groups in infosets.items():
        player = int(key)
        if player not in PLAYERS:
            raise GameError(f"infosets: bad player key {key!r}")
        for group in groups:
            members = list(group)
            if not members:
                raise GameError("infosets: empty group")
            for nid in members:
                if nid not in nodes:
                    raise GameError(f"infosets: unknown node {nid!r}")
            stated[player].append(members)

    def register(player: int, members: list[str]) -> None:
        members = sorted(members, key=preorder_pos.__getitem__)
        sid = f"{player}:{members[0]}"
        info = InfoSet(sid, player, tuple(members), nodes[members[0]].actions)
        built[sid] = info
        for nid in members:
            # duplicate membership is reported by validate_game; keep first
            node_infoset.setdefault(nid, sid)
        for a in info.actions:
            action_infoset.setdefault(a, sid)

    for player in PLAYERS:
        for members in stated[player]:
            register(player, members)
        for nid in preorder:
            if nodes[nid].player == player and nid not in node_infoset:
                register(player, [nid])

    ordered = dict(sorted(built.items(), key=lambda kv: preorder_pos[kv[1].nodes[0]]))
    return Game(nodes, ROOT_ID, tuple(preorder), parent, tuple(leaves), ordered,
                node_infoset, action_infoset, chance_reach, own_seq,
                {p: [list(g) for g in stated[p]] for p in PLAYERS})


def validate_game(game: Game) -> ValidationReport:
    """Check all Game invariants; violations are data, not exceptions."""
    out: list[Violation] = []

    def bad(code: str, where: str, message: str) -> None:
        out.append(Violation(code, where, message))

    # information sets partition each player's decision nodes
    seen: dict[str, str] = {}
    for info in game.infosets.values():
        for nid in info.nodes:
            node = game.nodes[nid]
            if node.player != info.player:
                bad("wrong-owner", info.id,
                    f"node {nid} belongs to player {node.player}, set is player {info.player}")
            if nid in seen and seen[nid] != info.id:
                bad("double-membership", nid,
                    f"node in both {seen[nid]} and {info.id}")
            seen[nid] = info.id
        first = game.nodes[info.nodes[0]].actions
        for nid in info.nodes[1:]:
            if game.nodes[nid].actions != first:
                bad("action-set mismatch", info.id,
                    f"node {nid} has actions {game.nodes[nid].actions}, expected {first}")
    for player in PLAYERS:
        for nid in game.decision_nodes(player):
            if nid not in game.node_infoset:
                bad("unassigned-node", nid, "decision node not covered by any information set")

    # action labels identify information sets
    owner: dict[str, str] = {}
    for info in game.infosets.values():
        for a in info.actions:
            if a in owner and owner[a] != info.id:
                bad("action-reuse", a, f"action used by {owner[a]} and {info.id}")
            owner[a] = info.id
    for nid in game.preorder:
        node = game.nodes[nid]
        if node.is_chance:
            for a in node.actions:
                if a in owner:
                    bad("action-reuse", a, f"chance action also used by {owner[a]}")

    # chance distributions
    for nid in game.preorder:
        node = game.nodes[nid]
        if node.is_chance:
            total = sum(node.probs)
            if abs(float(total) - 1.0) > 1e-12:
                bad("chance-sum", nid, f"chance distribution sums to {float(total)}")
            if any(p < 0 for p in node.probs):
                bad("chance-negative", nid, "negative chance probability")

    return ValidationReport(tuple(out))


# -- recall classification -------------------------------------------------


def _path_actions_by_infoset(game: Game, player: int, node_id: str) -> dict[str, str]:
    """Map infoset id -> own action taken there on the path to node_id.

    Assumes no absentmindedness (each set visited at most once per path).
    """
    out: dict[str, str] = {}
    for a in game.own_sequence(player, node_id):
        out[game.action_infoset[a]] = a
    return out


def has_absentmindedness(game: Game, player: int) -> bool:
    for info in game.player_infosets(player):
        if len(info.nodes) < 2:
            continue
        for i, anc in enumerate(info.nodes):
            for desc in info.nodes[i + 1:]:
                if game.is_ancestor(anc, desc):
                    return True
    return False


def classify_recall(game: Game, player: int) -> RecallClass:
    """Classify a player's recall per the A-loss / perfect-recall definitions."""
    sets = game.player_infosets(player)
    if not sets:
        return RecallClass.PERFECT_RECALL
    if has_absentmindedness(game, player):
        return RecallClass.ABSENTMINDED
    perfect = all(
        len({game.own_sequence(player, n) for n in info.nodes}) == 1 for info in sets
    )
    if perfect:
        return RecallClass.PERFECT_RECALL
    for info in sets:
        for h, h2 in itertools.combinations(info.nodes, 2):
            if game.own_sequence(player, h) == game.own_sequence(player, h2):
                continue
            m1 = _path_actions_by_infoset(game, player, h)
            m2 = _path_actions_by_infoset(game, player, h2)
            # memory loss must trace back to two distinct own actions of
            # one earlier information set
            if not any(m1[s] != m2[s] for s in m1.keys() & m2.keys()):
                return RecallClass.GENERAL_IMPERFECT_RECALL
    return RecallClass.A_LOSS_RECALL


def imperfect_recall_infosets(game: Game, player: int) -> tuple[InfoSet, ...]:
    """Information sets whose members disagree on the own sequence."""
    out = []
    for info in game.player_infosets(player):
        if len({game.own_sequence(player, n) for n in info.nodes}) > 1:
            out.append(info)
    return tuple(out)


# -- sequences ---------------------------------------------------------------


@dataclass(frozen=True)
class SequenceIndex:
    player: int
    sequences: tuple[Seq, ...]  # preorder, prefix-closed, empty sequence first
    index: dict[Seq, int]
    seq_of_infoset: dict[str, tuple[Seq, ...]]  # seq(I)
    infosets_after: dict[Seq, tuple[str, ...]]  # infsets(sigma)

    def render(self, seq: Seq) -> str:
        return "/".join(seq) if seq else "∅"


def enumerate_sequences(game: Game, player: int) -> SequenceIndex:
    """Deterministic prefix-closed sequence enumeration (preorder, sorted actions)."""
    seqs: list[Seq] = [EMPTY_SEQ]
    seen = {EMPTY_SEQ}
    seq_of_infoset: dict[str, list[Seq]] = {}
    infosets_after: dict[Seq, list[str]] = {}
    for nid in game.preorder:
        node = game.nodes[nid]
        if node.player != player:
            continue
        sigma = game.own_sequence(player, nid)
        sid = game.node_infoset[nid]
        bucket = seq_of_infoset.setdefault(sid, [])
        if sigma not in bucket:
            bucket.append(sigma)
            infosets_after.setdefault(sigma, [])
            if sid not in infosets_after[sigma]:
                infosets_after[sigma].append(sid)
        for a in node.actions:
            ext = sigma + (a,)
            if ext not in seen:
                seen.add(ext)
                seqs.append(ext)
    return SequenceIndex(
        player,
        tuple(seqs),
        {s: i for i, s in enumerate(seqs)},
        {k: tuple(v) for k, v in seq_of_infoset.items()},
        {k: tuple(v) for k, v in infosets_after.items()},
    )


def generalized_utility(game: Game) -> dict[tuple[Seq, Seq], float]:
    """g(sigma1, sigma2): chance-weighted utility mass per sequence pair."""
    out: dict[tuple[Seq, Seq], float] = {}
    for z in game.leaves:
        key = (game.own_sequence(1, z), game.own_sequence(2, z))
        out[key] = out.get(key, 0.0) + game.utility(z) * game.chance_reach(z)
    return out


# -- coarsest perfect recall refinement -------------------------------------


@dataclass(frozen=True)
class RefinementMap:
    player: int
    action_to_original: dict[str, str]
    original_to_actions: dict[str, tuple[str, ...]]
    infoset_to_original: dict[str, str]
    original_to_infosets: dict[str, tuple[str, ...]]
    node_to_original: dict[str, str]

    def to_original_action(self, action: str) -> str:
        return self.action_to_original.get(action, action)


def coarsest_perfect_recall_refinement(game: Game, player: int) -> tuple[Game, RefinementMap]:
    """Split the player's information sets into maximal equal-own-sequence parts.

    Action labels of split parts are freshened ("label~k" for part k >= 1)
    so they keep identifying their information set; the opponent and chance
    are untouched.  Returns the refined game and the label/set mapping.
    """
    if has_absentmindedness(game, player):
        raise AbsentmindedInput(f"player {player} is absentminded")

    # part index per node: partition each info set by own sequence,
    # parts ordered by their own sequence (lexicographic)
    part_of_node: dict[str, int] = {}
    parts_of_set: dict[str, list[tuple[Seq, list[str]]]] = {}
    for info in game.player_infosets(player):
        groups: dict[Seq, list[str]] = {}
        for nid in info.nodes:
            groups.setdefault(game.own_sequence(player, nid), []).append(nid)
        ordered = sorted(groups.items())
        parts_of_set[info.id] = ordered
        for j, (_, members) in enumerate(ordered):
            for nid in members:
                part_of_node[nid] = j

    def fresh(action: str, part: int) -> str:
        return action if part == 0 else f"{action}~{part}"

    action_to_original: dict[str, str] = {}
    original_to_actions: dict[str, list[str]] = {}
    node_to_original: dict[str, str] = {}
    groups_new: dict[int, dict[str, list[str]]] = {1: {}, 2: {}}

    def rebuild(nid: str, new_id_hint: str | None) -> dict:
        node = game.nodes[nid]
        new_id = ROOT_ID if nid == game.root else new_id_hint
        node_to_original[new_id] = nid
        if node.is_leaf:
            return {"leaf": node.utility}
        relabel = node.player == player and part_of_node.get(nid, 0) > 0
        part = part_of_node.get(nid, 0)
        children: dict[str, dict] = {}
        probs: dict[str, Fraction] = {}
        for idx, (a, cid) in enumerate(game.children_of(nid)):
            new_a = fresh(a, part) if relabel else a
            if node.player == player:
                action_to_original[new_a] = a
                original_to_actions.setdefault(a, [])
                if new_a not in original_to_actions[a]:
                    original_to_actions[a].append(new_a)
            children[new_a] = rebuild(cid, _norm_child_id(new_id, new_a))
            if node.is_chance:
                probs[new_a] = node.probs[idx]
        spec: dict = {"children": children}
        if node.is_chance:
            spec["player"] = "chance"
            spec["probs"] = probs
        else:
            spec["player"] = node.player
            key = (game.node_infoset[nid], part) if node.player == player \
                else (game.node_infoset[nid],)
            groups_new[node.player].setdefault(key, []).append(new_id)
        return spec

    tree = rebuild(game.root, ROOT_ID)
    infosets_spec = {
        p: [members for members in groups_new[p].values()] for p in PLAYERS
    }
    refined = build_game(tree, infosets_spec)

    infoset_to_original: dict[str, str] = {}
    original_to_infosets: dict[str, list[str]] = {}
    for info in refined.infosets.values():
        orig_node = node_to_original[info.nodes[0]]
        orig_sid = game.node_infoset[orig_node]
        infoset_to_original[info.id] = orig_sid
        original_to_infosets.setdefault(orig_sid, []).append(info.id)

    mapping = RefinementMap(
        player,
        action_to_original,
        {k: tuple(v) for k, v in original_to_actions.items()},
        infoset_to_original,
        {k: tuple(v) for k, v in original_to_infosets.items()},
        node_to_original,
    )
    return refined, mapping


# -- game surgery used by oracles and reconstruction bounds -----------------


def subgame_at(game: Game, node_id: str) -> Game:
    """The subtree rooted at node_id as a standalone game.

    Information sets are clipped to surviving nodes; chance probabilities
    below the root are kept as-is (reach is relative to the new root).
    """
    keep: set[str] = set()

    def mark(nid: str) -> None:
        keep.add(nid)
        for _, cid in game.children_of(nid):
            mark(cid)

    mark(node_id)
    id_map: dict[str, str] = {}

    def rebuild(nid: str, new_id: str) -> dict:
        node = game.nodes[nid]
        id_map[nid] = new_id
        if node.is_leaf:
            return {"leaf": node.utility}
        children = {
            a: rebuild(cid, _norm_child_id(new_id, a)) for a, cid in game.children_of(nid)
        }
        if node.is_chance:
            return {"player": "chance",
                    "probs": {a: node.probs[i] for i, a in enumerate(node.actions)},
                    "children": children}
        return {"player": node.player, "children": children}

    tree = rebuild(node_id, ROOT_ID)
    infosets_spec: dict[int, list[list[str]]] = {1: [], 2: []}
    for info in game.infosets.values():
        members = [id_map[n] for n in info.nodes if n in keep]
        if members:
            infosets_spec[info.player].append(members)
    return build_game(tree, infosets_spec)


def fix_infoset_behavior(game: Game, infoset_id: str, dist: Mapping[str, object]) -> Game:
    """Replace one information set's decisions with fixed chance moves.

    Used by grid oracles: fixing the behavior at an imperfect-recall set
    leaves a game where the owner no longer decides there.  Action labels
    are suffixed with the node id to stay globally unique.
    """
    info = game.infosets[infoset_id]
    probs = {a: parse_exact(dist[a]) for a in info.actions}
    targets = set(info.nodes)
    id_map: dict[str, str] = {}

    def rebuild(nid: str, new_id: str) -> dict:
        node = game.nodes[nid]
        id_map[nid] = new_id
        if node.is_leaf:
            return {"leaf": node.utility}
        if nid in targets:
            children = {}
            new_probs = {}
            for a, cid in game.children_of(nid):
                tag = new_id.replace("/", "|")
                new_a = f"{a}@{tag}"
                children[new_a] = rebuild(cid, _norm_child_id(new_id, new_a))
                new_probs[new_a] = probs[a]
            return {"player": "chance", "probs": new_probs, "children": children}
        children = {a: rebuild(cid, _norm_child_id(new_id, a)) for a, cid in game.children_of(nid)}
        if node.is_chance:
            return {"player": "chance",
                    "probs": {a: node.probs[i] for i, a in enumerate(node.actions)},
                    "children": children}
        return {"player": node.player, "children": children}

    tree = rebuild(game.root, ROOT_ID)
    infosets_spec: dict[int, list[list[str]]] = {1: [], 2: []}
    for other in game.infosets.values():
        if other.id == infoset_id:
            continue
        infosets_spec[other.player].append([id_map[n] for n in other.nodes])
    return build_game(tree, infosets_spec)

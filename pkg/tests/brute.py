"""Independent brute-force reference implementations for cross-checks.

Everything here is written the dumb way on purpose: direct subset
enumeration, explicit graph searches, step-by-step simulation.  These are
the oracles the package's cleverer implementations are validated against,
so they must not share code paths with them.
"""

from __future__ import annotations

from collections import deque

from dpncaret.formula import Ap, Closure, Next, Not, Or, Until, TAGS


def brute_atoms(cl: Closure) -> set:
    """All subsets of the closure satisfying the four atom conditions."""
    members = cl.members
    n = len(members)
    out = set()
    for bits in range(1 << n):
        have = lambda i: bool(bits >> i & 1)
        ok = True
        for i, m in enumerate(members):
            j = cl.index[m.operand] if isinstance(m, Not) else cl.index[Not(m)]
            if isinstance(m, Not):
                if have(i) == have(j):
                    ok = False
                    break
            else:
                if have(i) == have(j):
                    ok = False
                    break
        if not ok:
            continue
        for i, m in enumerate(members):
            if isinstance(m, Or):
                if have(i) != (have(cl.index[m.left]) or have(cl.index[m.right])):
                    ok = False
                    break
            elif isinstance(m, Until):
                rhs = have(cl.index[m.right]) or (
                    have(cl.index[m.left]) and have(cl.index[Next(m.mod, m)])
                )
                if have(i) != rhs:
                    ok = False
                    break
        if not ok:
            continue
        tags_present = [t for t in TAGS if have(cl.index[Ap(t)])]
        if len(tags_present) != 1:
            continue
        out.add(bits)
    return out


def bounded_reachable(rules, start, *, max_depth=6, max_configs=200_000):
    """Forward closure of one configuration under enabled rules.

    Returns (set of (control, word) configurations, closed flag); the flag
    is False when the stack-depth cap or the size cap cut exploration.
    """
    seen = {start}
    queue = deque([start])
    closed = True
    while queue:
        control, word = queue.popleft()
        if not word:
            continue
        top, rest = word[0], word[1:]
        for r in rules:
            if r.control != control or r.symbol != top:
                continue
            succ = (r.target, r.word + rest)
            if len(succ[1]) > max_depth:
                closed = False
                continue
            if succ not in seen:
                if len(seen) >= max_configs:
                    closed = False
                    continue
                seen.add(succ)
                queue.append(succ)
    return seen, closed


def reaches_target(rules, start, accepts, *, max_depth=6):
    """Can the configuration reach an accepted one within the depth bound?

    Returns True/False/None; None means the bounded search was cut before
    finding a witness, so a definite negative is not justified.
    """
    reachable, closed = bounded_reachable(rules, start, max_depth=max_depth)
    if any(accepts(c, w) for c, w in reachable):
        return True
    return False if closed else None


def lasso_runs(rules, start, *, max_len=14, visit_bound=2):
    """All (prefix, cycle) control/stack lassos up to a length bound.

    Yields (configs, cycle_start) where configs is the path including the
    revisited configuration once.
    """
    out = []

    def succs(cfg):
        control, word = cfg
        if not word:
            return
        top, rest = word[0], word[1:]
        for r in rules:
            if r.control == control and r.symbol == top:
                yield (r.target, r.word + rest)

    path = [start]
    counts = {start: 1}

    def dfs():
        if len(path) > max_len:
            return
        for succ in succs(path[-1]):
            for j, cfg in enumerate(path):
                if cfg == succ:
                    out.append((list(path), j))
            if counts.get(succ, 0) >= visit_bound:
                continue
            path.append(succ)
            counts[succ] = counts.get(succ, 0) + 1
            dfs()
            path.pop()
            counts[succ] -= 1

    dfs()
    return out


def generalized_accepts_lasso(configs, cycle_start, family) -> bool:
    """Direct check: does the cycle visit every family member?"""
    cycle_controls = {c for c, _ in configs[cycle_start:]}
    return all(cycle_controls & fam for fam in family)


def degeneralized_accepts_lasso(configs, cycle_start, family, accepting) -> bool:
    """Simulate the counter construction along the lasso run.

    Accepts iff an accepting (control, index) state occurs in the periodic
    orbit the annotated run settles into.
    """
    k = len(family)
    controls = [c for c, _ in configs]
    idx = 1
    pos = 0
    step = 0
    first_seen: dict = {}
    hits: list = []
    while True:
        control = controls[pos]
        state = (pos, idx)
        if pos >= cycle_start:
            if state in first_seen:
                orbit_start = first_seen[state]
                return any(h >= orbit_start for h in hits)
            first_seen[state] = step
        if (control, idx) in accepting:
            hits.append(step)
        if control in family[idx - 1]:
            idx = idx % k + 1
        pos = pos + 1 if pos + 1 < len(controls) else cycle_start
        step += 1

"""Brute-force replay of a recorded event log.

Rebuilds every particle's trajectory from raw displacement records alone
(no engine bookkeeping, caches, or label arrays) and recomputes observables
naively.  Used to derive golden values and to cross-check the incremental
tracking logic.
"""

import math

import numpy as np

from bbmsim.analytic import m_of_t


class ReplayOracle:
    def __init__(self, log):
        self.birth_time = {0: 0.0}
        self.birth_pos = {0: 0.0}
        self.parent = {0: None}
        self.death_time = {}          # branch or prune time
        self.moves = {0: []}          # id -> list of (t1, dx) in order
        for rec in log:
            if rec[0] == "move":
                _, ident, t0, t1, dx = rec
                prev_end = self.moves[ident][-1][1] if self.moves[ident] else self.birth_time[ident]
                assert abs(t0 - prev_end) < 1e-12, "gap in a particle's move records"
                self.moves[ident].append((t0, t1, dx))
            elif rec[0] == "branch":
                _, t, parent, c1, c2, x = rec
                got = self.position_at(parent, t)
                assert abs(got - x) < 1e-12, "parent position mismatch at branch"
                self.death_time[parent] = t
                for c in (c1, c2):
                    self.birth_time[c] = t
                    self.birth_pos[c] = x      # children start exactly at the split point
                    self.parent[c] = parent
                    self.moves[c] = []
            elif rec[0] == "prune":
                _, t, idents = rec
                for ident in idents:
                    # pruned particles count as alive at the prune instant
                    self.death_time[ident] = t + 1e-15
            else:
                raise ValueError(f"unknown record {rec[0]!r}")

    def position_at(self, ident, t):
        x = self.birth_pos[ident]
        for _, t1, dx in self.moves[ident]:
            if t1 <= t + 1e-12:
                x += dx
        return x

    def alive_at(self, t):
        out = []
        for ident, bt in self.birth_time.items():
            if bt <= t + 1e-12 and self.death_time.get(ident, math.inf) > t + 1e-12:
                out.append(ident)
        return sorted(out)

    def extremes_at(self, t):
        """((id, pos) rightmost, (id, pos) leftmost), ties to smallest id."""
        ids = self.alive_at(t)
        positions = [self.position_at(i, t) for i in ids]
        rmax = max(positions)
        rmin = min(positions)
        rid = min(i for i, p in zip(ids, positions) if p == rmax)
        lid = min(i for i, p in zip(ids, positions) if p == rmin)
        return (rid, rmax), (lid, rmin)

    def ancestor_at(self, ident, s):
        while self.birth_time[ident] > s + 1e-12:
            ident = self.parent[ident]
        return ident

    def crossing_time(self, y, grid):
        """First grid time t >= 1 with R(t) - m(t) > y, or None."""
        for t in grid:
            if t < 1.0 - 1e-12:
                continue
            (_, r), _ = self.extremes_at(t)
            if r - m_of_t(t) > y:
                return t
        return None

    def tau_map(self, s, grid):
        """label -> first grid offset at which the argmax descends from that
        time-s particle; labels indexed by id order at time s."""
        snapshot_ids = self.alive_at(s)
        label_of = {ident: k for k, ident in enumerate(snapshot_ids)}
        taus = {}
        for t in grid:
            if t <= s + 1e-12:
                continue
            (rid, _), _ = self.extremes_at(t)
            lbl = label_of[self.ancestor_at(rid, s)]
            if lbl not in taus:
                taus[lbl] = t - s
            if len(taus) == len(snapshot_ids):
                break
        return taus, label_of

    def increments(self):
        """All recorded displacement increments normalized to unit variance."""
        out = []
        for mv in self.moves.values():
            for t0, t1, dx in mv:
                out.append(dx / math.sqrt(t1 - t0))
        return np.array(out)

"""Integer max-flow by BFS augmenting paths (Edmonds-Karp).

Small and dependency free: capacities are integers, arcs live in flat lists
and every arc ``k`` is paired with its reverse ``k ^ 1``.
"""

from __future__ import annotations

from collections import deque


class FlowGraph:
    def __init__(self, n: int):
        self.n = n
        self.head: list[int] = []
        self.cap: list[int] = []
        self.flow: list[int] = []
        self.adj: list[list[int]] = [[] for _ in range(n)]

    def add_arc(self, u: int, v: int, cap: int) -> int:
        """Directed arc ``u -> v``; returns its index."""
        k = len(self.head)
        self.head += [v, u]
        self.cap += [cap, 0]
        self.flow += [0, 0]
        self.adj[u].append(k)
        self.adj[v].append(k + 1)
        return k

    def _augment(self, s: int, t: int) -> bool:
        parent = [-1] * self.n
        parent[s] = -2
        queue = deque([s])
        head, cap, flow, adj = self.head, self.cap, self.flow, self.adj
        while queue:
            u = queue.popleft()
            for k in adj[u]:
                v = head[k]
                if parent[v] == -1 and cap[k] - flow[k] > 0:
                    parent[v] = k
                    if v == t:
                        queue.clear()
                        break
                    queue.append(v)
        if parent[t] == -1:
            return False
        # bottleneck; with unit capacities this is always 1
        delta = None
        v = t
        while v != s:
            k = parent[v]
            room = cap[k] - flow[k]
            delta = room if delta is None else min(delta, room)
            v = head[k ^ 1]
        v = t
        while v != s:
            k = parent[v]
            flow[k] += delta
            flow[k ^ 1] -= delta
            v = head[k ^ 1]
        self._value += delta
        return True

    def max_flow(self, s: int, t: int) -> int:
        if s == t:
            raise ValueError("source and sink coincide")
        self._value = 0
        while self._augment(s, t):
            pass
        return self._value

    def decompose(self, s: int, t: int) -> list[list[int]]:
        """Split the current integral flow into ``s -> t`` node paths (cycles are dropped)."""
        remaining = [max(f, 0) for f in self.flow]
        paths = []
        while True:
            path = [s]
            seen = {s}
            u = s
            while u != t:
                nxt = next((k for k in self.adj[u] if k % 2 == 0 and remaining[k] > 0), None)
                if nxt is None:
                    break
                remaining[nxt] -= 1
                u = self.head[nxt]
                if u in seen:  # flow cycle: cut it out of the path
                    while path[-1] != u:
                        seen.discard(path.pop())
                    continue
                seen.add(u)
                path.append(u)
            if u != t:
                return paths
            paths.append(path)

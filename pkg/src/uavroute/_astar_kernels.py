"""A* kernels over the clearance surface.

Two interchangeable implementations with identical pop order: a numba kernel
driving an array-backed binary heap, and a plain-Python heapq version.  Both
order the open list by (f, h, x, y) and return the same path.

Status codes: FOUND, UNREACHABLE (open list exhausted), BUDGET (expansion
limit hit before the goal was settled).
"""
import heapq
import math

import numpy as np

from ._accel import NUMBA_AVAILABLE, njit

FOUND = 1
UNREACHABLE = 0
BUDGET = -1

_DX = np.array([-1, -1, -1, 0, 0, 1, 1, 1], dtype=np.int64)
_DY = np.array([-1, 0, 1, -1, 1, -1, 0, 1], dtype=np.int64)


@njit(cache=True)
def _less(f, h, k, i, j):
    if f[i] != f[j]:
        return f[i] < f[j]
    if h[i] != h[j]:
        return h[i] < h[j]
    return k[i] < k[j]


@njit(cache=True)
def _swap(f, h, k, g, i, j):
    f[i], f[j] = f[j], f[i]
    h[i], h[j] = h[j], h[i]
    k[i], k[j] = k[j], k[i]
    g[i], g[j] = g[j], g[i]


@njit(cache=True)
def astar_numba(z, blocked, cell_size, sx, sy, tx, ty, max_expansions):
    H, W = z.shape
    n = H * W
    gbest = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    cap = 1024
    hf = np.empty(cap)
    hh = np.empty(cap)
    hk = np.empty(cap, dtype=np.int64)
    hg = np.empty(cap)
    size = 0
    zt = z[ty, tx]

    h0 = math.sqrt(((tx - sx) * cell_size) ** 2 + ((ty - sy) * cell_size) ** 2
                   + (zt - z[sy, sx]) ** 2)
    gbest[sy * W + sx] = 0.0
    hf[0] = h0
    hh[0] = h0
    hk[0] = sx * H + sy
    hg[0] = 0.0
    size = 1
    expansions = 0
    status = UNREACHABLE
    while size > 0:
        # pop min
        key = hk[0]
        g = hg[0]
        size -= 1
        if size > 0:
            _swap(hf, hh, hk, hg, 0, size)
            i = 0
            while True:
                l = 2 * i + 1
                if l >= size:
                    break
                m = l
                r = l + 1
                if r < size and _less(hf, hh, hk, r, l):
                    m = r
                if _less(hf, hh, hk, m, i):
                    _swap(hf, hh, hk, hg, m, i)
                    i = m
                else:
                    break
        x = key // H
        y = key % H
        node = y * W + x
        if g > gbest[node]:
            continue
        if x == tx and y == ty:
            status = FOUND
            break
        if max_expansions > 0 and expansions >= max_expansions:
            status = BUDGET
            break
        expansions += 1
        zc = z[y, x]
        for d in range(8):
            dx = _DX[d]
            dy = _DY[d]
            nx = x + dx
            ny = y + dy
            if nx < 0 or ny < 0 or nx >= W or ny >= H or blocked[ny, nx]:
                continue
            if dx != 0 and dy != 0 and (blocked[y, nx] or blocked[ny, x]):
                continue
            dz = z[ny, nx] - zc
            ng = g + math.sqrt((dx * cell_size) ** 2 + (dy * cell_size) ** 2 + dz * dz)
            nn = ny * W + nx
            if ng < gbest[nn]:
                gbest[nn] = ng
                parent[nn] = node
                nh = math.sqrt(((tx - nx) * cell_size) ** 2 + ((ty - ny) * cell_size) ** 2
                               + (zt - z[ny, nx]) ** 2)
                if size == cap:
                    cap *= 2
                    nf = np.empty(cap)
                    nf[:size] = hf[:size]
                    hf = nf
                    nhh = np.empty(cap)
                    nhh[:size] = hh[:size]
                    hh = nhh
                    nk = np.empty(cap, dtype=np.int64)
                    nk[:size] = hk[:size]
                    hk = nk
                    ng2 = np.empty(cap)
                    ng2[:size] = hg[:size]
                    hg = ng2
                hf[size] = ng + nh
                hh[size] = nh
                hk[size] = nx * H + ny
                hg[size] = ng
                i = size
                size += 1
                while i > 0:
                    p = (i - 1) // 2
                    if _less(hf, hh, hk, i, p):
                        _swap(hf, hh, hk, hg, i, p)
                        i = p
                    else:
                        break
    if status != FOUND:
        return status, np.empty(0, dtype=np.int64), expansions
    count = 1
    node = ty * W + tx
    while parent[node] >= 0:
        node = parent[node]
        count += 1
    path = np.empty(count, dtype=np.int64)
    node = ty * W + tx
    for i in range(count - 1, -1, -1):
        path[i] = node
        node = parent[node]
    return status, path, expansions


def astar_python(z, blocked, cell_size, sx, sy, tx, ty, max_expansions):
    H, W = z.shape
    zl = z.tolist()
    bl = blocked.tolist()
    gbest = {}
    parent = {}
    zt = zl[ty][tx]
    sqrt = math.sqrt
    h0 = sqrt(((tx - sx) * cell_size) ** 2 + ((ty - sy) * cell_size) ** 2
              + (zt - zl[sy][sx]) ** 2)
    gbest[(sx, sy)] = 0.0
    heap = [(h0, h0, sx, sy, 0.0)]
    dirs = list(zip(_DX.tolist(), _DY.tolist()))
    expansions = 0
    status = UNREACHABLE
    while heap:
        _, _, x, y, g = heapq.heappop(heap)
        if g > gbest[(x, y)]:
            continue
        if x == tx and y == ty:
            status = FOUND
            break
        if max_expansions > 0 and expansions >= max_expansions:
            status = BUDGET
            break
        expansions += 1
        zc = zl[y][x]
        for dx, dy in dirs:
            nx = x + dx
            ny = y + dy
            if nx < 0 or ny < 0 or nx >= W or ny >= H or bl[ny][nx]:
                continue
            if dx and dy and (bl[y][nx] or bl[ny][x]):
                continue
            dz = zl[ny][nx] - zc
            ng = g + sqrt((dx * cell_size) ** 2 + (dy * cell_size) ** 2 + dz * dz)
            if ng < gbest.get((nx, ny), math.inf):
                gbest[(nx, ny)] = ng
                parent[(nx, ny)] = (x, y)
                nh = sqrt(((tx - nx) * cell_size) ** 2 + ((ty - ny) * cell_size) ** 2
                          + (zt - zl[ny][nx]) ** 2)
                heapq.heappush(heap, (ng + nh, nh, nx, ny, ng))
    if status != FOUND:
        return status, np.empty(0, dtype=np.int64), expansions
    cells = [(tx, ty)]
    while cells[-1] in parent:
        cells.append(parent[cells[-1]])
    cells.reverse()
    path = np.array([y * W + x for x, y in cells], dtype=np.int64)
    return status, path, expansions


def astar(z, blocked, cell_size, sx, sy, tx, ty, max_expansions=0, backend=None):
    """Dispatch to the selected backend; ``backend`` overrides the env default."""
    if backend is None:
        backend = "numba" if NUMBA_AVAILABLE else "python"
    if backend == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba backend requested but numba is disabled or missing")
        return astar_numba(z, blocked, float(cell_size), int(sx), int(sy), int(tx), int(ty),
                           int(max_expansions))
    return astar_python(z, blocked, float(cell_size), int(sx), int(sy), int(tx), int(ty),
                        int(max_expansions))

"""Slow reference implementations used as test oracles.

Each one is written from the definition with explicit loops and shares no
code with the package beyond documented constants.
"""

import math
from collections import deque
from fractions import Fraction

# ---------------------------------------------------------------------------
# Canny
# ---------------------------------------------------------------------------


def _reflect(i, n):
    # half-sample symmetric: ... c b a | a b c ... | c b a
    while i < 0 or i >= n:
        i = -i - 1 if i < 0 else 2 * n - i - 1
    return i


def _correlate(img, kernel):
    rows, cols = len(img), len(img[0])
    kr, kc = len(kernel) // 2, len(kernel[0]) // 2
    out = [[0.0] * cols for _ in range(rows)]
    for r in range(rows):
        for c in range(cols):
            s = 0.0
            for i, krow in enumerate(kernel):
                for j, w in enumerate(krow):
                    if w:
                        s += w * img[_reflect(r + i - kr, rows)][_reflect(c + j - kc, cols)]
            out[r][c] = s
    return out


def canny_oracle(gray, sigma=1.0, size=5, low=0.1, high=0.2, quantum=1e9):
    """Blur, Sobel, non-maximum suppression and hysteresis on a list-of-lists image.

    Magnitudes are the Sobel norm over 4*sqrt(2), rounded to 1/quantum units.
    A pixel survives suppression when its magnitude is positive, strictly
    above the neighbour in the gradient direction and at least the one
    behind it; neighbours outside the patch count as zero.
    """
    rows, cols = len(gray), len(gray[0])
    g1 = [math.exp(-((k - (size - 1) / 2) ** 2) / (2 * sigma * sigma)) for k in range(size)]
    tot = sum(g1)
    g1 = [v / tot for v in g1]
    blurred = _correlate(_correlate(gray, [g1]), [[v] for v in g1])
    sx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    sy = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    gx = _correlate(blurred, sx)
    gy = _correlate(blurred, sy)
    scale = 4 * math.sqrt(2)
    qx = [[math.floor(gx[r][c] / scale * quantum + 0.5) for c in range(cols)] for r in range(rows)]
    qy = [[math.floor(gy[r][c] / scale * quantum + 0.5) for c in range(cols)] for r in range(rows)]
    mag = [[qx[r][c] ** 2 + qy[r][c] ** 2 for c in range(cols)] for r in range(rows)]

    def at(r, c):
        return mag[r][c] if 0 <= r < rows and 0 <= c < cols else 0

    keep = [[False] * cols for _ in range(rows)]
    for r in range(rows):
        for c in range(cols):
            if mag[r][c] == 0:
                continue
            ang = math.degrees(math.atan2(qy[r][c], qx[r][c])) % 180.0
            if ang < 22.5 or ang >= 157.5:
                dr, dc = 0, 1
            elif ang < 67.5:
                dr, dc = 1, 1
            elif ang < 112.5:
                dr, dc = 1, 0
            else:
                dr, dc = 1, -1
            keep[r][c] = mag[r][c] > at(r + dr, c + dc) and mag[r][c] >= at(r - dr, c - dc)
    hi = round(high * quantum) ** 2
    lo = round(low * quantum) ** 2
    out = [[0] * cols for _ in range(rows)]
    queue = deque((r, c) for r in range(rows) for c in range(cols) if keep[r][c] and mag[r][c] >= hi)
    for r, c in queue:
        out[r][c] = 1
    while queue:
        r, c = queue.popleft()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols and not out[rr][cc] and keep[rr][cc] and mag[rr][cc] >= lo:
                    out[rr][cc] = 1
                    queue.append((rr, cc))
    return out


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------


def _dist(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def dbscan_oracle(X, eps, min_pts):
    """Labels with -1 for noise; border points take their nearest core neighbour's cluster."""
    n = len(X)
    D = [[_dist(X[i], X[j]) for j in range(n)] for i in range(n)]
    nbrs = [[j for j in range(n) if D[i][j] <= eps] for i in range(n)]
    core = [len(nbrs[i]) >= min_pts for i in range(n)]
    labels = [-1] * n
    k = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        labels[i] = k
        stack = [i]
        while stack:
            p = stack.pop()
            for q in nbrs[p]:
                if core[q] and labels[q] == -1:
                    labels[q] = k
                    stack.append(q)
        k += 1
    for i in range(n):
        if core[i]:
            continue
        best = None
        for j in nbrs[i]:
            if core[j] and (best is None or D[i][j] < D[i][best]):
                best = j
        if best is not None:
            labels[i] = labels[best]
    return labels


def same_partition(a, b):
    """True when two labelings agree up to renaming (noise must match exactly)."""
    fwd, bwd = {}, {}
    for x, y in zip(a, b):
        x, y = int(x), int(y)
        if (x == -1) != (y == -1):
            return False
        if x == -1:
            continue
        if fwd.setdefault(x, y) != y or bwd.setdefault(y, x) != x:
            return False
    return True


def silhouette_oracle(X, labels):
    pts = [(x, l) for x, l in zip(X, labels) if l != -1]
    clusters = sorted(set(l for _, l in pts))
    total = 0.0
    for i, (xi, li) in enumerate(pts):
        same = [_dist(xi, xj) for j, (xj, lj) in enumerate(pts) if lj == li and j != i]
        if not same:
            continue  # singleton scores 0
        a = sum(same) / len(same)
        b = min(
            sum(_dist(xi, xj) for xj, lj in pts if lj == c) / sum(1 for _, lj in pts if lj == c)
            for c in clusters
            if c != li
        )
        total += (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return total / len(pts)


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------


def ssim_oracle(x, y, window=8, c1=(0.01 * 255) ** 2, c2=(0.03 * 255) ** 2):
    """Mean over every window position of the single-window SSIM, population moments."""
    rows, cols = len(x), len(x[0])
    n = window * window
    vals = []
    for r in range(rows - window + 1):
        for c in range(cols - window + 1):
            xs = [x[r + i][c + j] for i in range(window) for j in range(window)]
            ys = [y[r + i][c + j] for i in range(window) for j in range(window)]
            mx, my = sum(xs) / n, sum(ys) / n
            vx = sum((v - mx) ** 2 for v in xs) / n
            vy = sum((v - my) ** 2 for v in ys) / n
            cxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys)) / n
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


# ---------------------------------------------------------------------------
# level metrics
# ---------------------------------------------------------------------------


def metrics_oracle(rows, solids, rewards, enemies, interesting, gap_rows=2):
    """Dict of leniency, density, linearity, interestingness and enemy sparsity for row strings."""
    h, w = len(rows), len(rows[0])
    T = h * w
    cnt = lambda s: sum(ch in s for row in rows for ch in row)
    gaps = sum(1 for c in range(w) if not any(rows[r][c] in solids for r in range(h - gap_rows, h)))
    leniency = (2 * cnt(rewards) - 0.5 * gaps - cnt(enemies)) / T
    centres = []
    for r in range(h):
        c = 0
        while c < w:
            top = rows[r][c] in solids and (r == 0 or rows[r - 1][c] not in solids)
            if top:
                start = c
                while c + 1 < w and rows[r][c + 1] in solids and (r == 0 or rows[r - 1][c + 1] not in solids):
                    c += 1
                centres.append((Fraction(start + c, 2), Fraction(h - 1 - r, h)))
            c += 1
    linearity = 0.0
    if len(centres) >= 2:
        n = len(centres)
        sx = sum(p[0] for p in centres)
        sy = sum(p[1] for p in centres)
        sxx = sum(p[0] * p[0] for p in centres)
        sxy = sum(p[0] * p[1] for p in centres)
        den = n * sxx - sx * sx
        slope = (n * sxy - sx * sy) / den if den else Fraction(0)
        icpt = (sy - slope * sx) / n
        linearity = float(sum((y - (icpt + slope * x)) ** 2 for x, y in centres) / n)
    xs = [c for row in rows for c, ch in enumerate(row) if ch in enemies]
    sparsity = 0.0
    if xs:
        m = sum(xs) / len(xs)
        sparsity = sum(abs(x - m) for x in xs) / len(xs)
    return {
        "leniency": leniency,
        "density": cnt(solids) / T,
        "linearity": linearity,
        "interestingness": cnt(interesting) / T,
        "enemy_sparsity": sparsity,
    }


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------


def lstm_scalar_oracle(x, h, c, w_ih, w_hh, b_ih, b_hh):
    """Gate-by-gate LSTM step with gates stacked input, forget, candidate, output."""
    H = len(h)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    z = []
    for k in range(4 * H):
        s = b_ih[k] + b_hh[k]
        s += sum(w_ih[k][j] * x[j] for j in range(len(x)))
        s += sum(w_hh[k][j] * h[j] for j in range(H))
        z.append(s)
    c_new, h_new = [], []
    for u in range(H):
        i, f, g, o = sig(z[u]), sig(z[H + u]), math.tanh(z[2 * H + u]), sig(z[3 * H + u])
        cn = f * c[u] + i * g
        c_new.append(cn)
        h_new.append(o * math.tanh(cn))
    return h_new, c_new


def reachability_oracle(rows, solids, jump_height=4, jump_span=4, start_cols=3):
    """Plain BFS over standing cells: can the right edge be reached from the left?

    Same movement rules as the agent, restated cell by cell: walk one column,
    or rise up to ``jump_height`` rows and drift up to ``jump_span + 1``
    columns through empty cells; either way the body then falls until it lands.
    """
    h, w = len(rows), len(rows[0])
    solid = [[ch in solids for ch in row] for row in rows]

    def stands(r, c):
        return r + 1 < h and not solid[r][c] and solid[r + 1][c]

    def fall(r, c):
        while r + 1 < h:
            if solid[r + 1][c]:
                return (r, c)
            r += 1
        return None

    def successors(r, c):
        for d in (-1, 1):
            if 0 <= c + d < w and not solid[r][c + d]:
                yield fall(r, c + d)
        for up in range(1, jump_height + 1):
            if r - up < 0 or solid[r - up][c]:
                break
            for d in (-1, 1):
                for k in range(1, jump_span + 2):
                    cc = c + d * k
                    if cc < 0 or cc >= w or solid[r - up][cc]:
                        break
                    yield fall(r - up, cc)

    frontier = [(r, c) for r in range(h) for c in range(min(start_cols, w)) if stands(r, c)]
    seen = set(frontier)
    while frontier:
        nxt = []
        for r, c in frontier:
            if c == w - 1:
                return True
            for s in successors(r, c):
                if s is not None and s not in seen:
                    seen.add(s)
                    nxt.append(s)
        frontier = nxt
    return False


def movement_cost_oracle(rows, costs):
    cells = [ch for row in rows for ch in row]
    return sum(costs[ch] for ch in cells) / len(cells)

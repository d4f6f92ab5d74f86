"""Numba kernels for tree induction and prediction.

Trees are flat arrays: ``feature[i] < 0`` marks a leaf, otherwise rows with
``x[feature[i]] < threshold[i]`` go to ``left[i]`` and the rest to
``right[i]``. ``value[i]`` holds the class-probability pair (classification)
or ``(weight, 0)`` (boosting) of every node.

Split search runs on integer codes: ``code = #{t in T_f : t <= x}`` for the
sorted candidate thresholds ``T_f`` of feature ``f``, so ``code <= k`` is the
same test as ``x < T_f[k]``.
"""
import numba
import numpy as np

GINI = 0
NEWTON = 1


@numba.njit(cache=True, nogil=True)
def _rand_u64(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _rand_unit(state):
    return float(_rand_u64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True, nogil=True)
def _score(mode, a0, a1, lam):
    if mode == GINI:
        tot = a0 + a1
        if tot <= 0.0:
            return 0.0
        return (a0 * a0 + a1 * a1) / tot
    den = a1 + lam
    if den <= 0.0:
        return 0.0
    return a0 * a0 / den


@numba.njit(cache=True, nogil=True)
def _gain(mode, l0, l1, r0, r1, p0, p1, lam, gamma):
    g = _score(mode, l0, l1, lam) + _score(mode, r0, r1, lam) - _score(mode, p0, p1, lam)
    if mode == GINI:
        return g
    return 0.5 * g - gamma


@numba.njit(cache=True, nogil=True)
def _leaf_value(mode, p0, p1, lam, out):
    if mode == GINI:
        tot = p0 + p1
        out[0] = p0 / tot
        out[1] = p1 / tot
    else:
        den = p1 + lam
        out[0] = -p0 / den if den > 0.0 else 0.0
        out[1] = 0.0


@numba.njit(cache=True, nogil=True)
def grow_tree(codes, X, T, nthr, stats, rows, row_leaf, mode, max_depth, mtry,
              extra, lam, gamma, seed):
    """Depth-first greedy growth of one tree over ``rows``.

    ``stats[r]`` is the weighted class-count pair (GINI) or the gradient /
    hessian pair (NEWTON) of row ``r``. On return ``row_leaf[r]`` holds the
    leaf reached by every row in ``rows``.
    """
    d = X.shape[1]
    n_rows = rows.shape[0]
    max_nodes = 2 * n_rows + 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros((max_nodes, 2))
    depth_of = np.zeros(max_nodes, dtype=np.int32)

    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    perm = np.arange(d)
    max_m = 0
    for f in range(d):
        if nthr[f] > max_m:
            max_m = nthr[f]
    hist0 = np.zeros(max_m + 1)
    hist1 = np.zeros(max_m + 1)
    hcnt = np.zeros(max_m + 1, dtype=np.int64)
    buf_codes = np.empty(n_rows, dtype=np.int32)
    tmp = np.empty(n_rows, dtype=np.int64)
    s0 = np.empty(n_rows)
    s1 = np.empty(n_rows)
    thr_eps = -np.inf if mode == GINI else 0.0

    st_node = np.empty(max_nodes, dtype=np.int64)
    st_start = np.empty(max_nodes, dtype=np.int64)
    st_end = np.empty(max_nodes, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_rows
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = depth_of[node]
        cnt = end - start
        p0 = 0.0
        p1 = 0.0
        for i in range(start, end):
            r = rows[i]
            s0[i] = stats[r, 0]
            s1[i] = stats[r, 1]
            p0 += s0[i]
            p1 += s1[i]
        _leaf_value(mode, p0, p1, lam, value[node])

        is_leaf = depth >= max_depth or cnt < 2
        if mode == GINI and (p0 <= 0.0 or p1 <= 0.0):
            is_leaf = True
        best_gain = thr_eps
        best_f = -1
        best_k = -1
        best_thr = 0.0
        if not is_leaf:
            n_cand = d
            if mtry < d:
                n_cand = mtry
                for q in range(mtry):
                    j = q + int(_rand_unit(state) * (d - q))
                    if j >= d:
                        j = d - 1
                    t = perm[q]
                    perm[q] = perm[j]
                    perm[j] = t
            for q in range(n_cand):
                f = perm[q] if mtry < d else q
                if extra:
                    mn = np.inf
                    mx = -np.inf
                    for i in range(start, end):
                        v = X[rows[i], f]
                        if v < mn:
                            mn = v
                        if v > mx:
                            mx = v
                    if not mx > mn:
                        continue
                    thr = mn + _rand_unit(state) * (mx - mn)
                    l0 = 0.0
                    l1 = 0.0
                    nl = 0
                    for i in range(start, end):
                        r = rows[i]
                        if X[r, f] < thr:
                            l0 += stats[r, 0]
                            l1 += stats[r, 1]
                            nl += 1
                    if nl == 0 or nl == cnt:
                        continue
                    g = _gain(mode, l0, l1, p0 - l0, p1 - l1, p0, p1, lam, gamma)
                    if g > best_gain:
                        best_gain = g
                        best_f = f
                        best_thr = thr
                    continue

                m = nthr[f]
                if m == 0:
                    continue
                if cnt * 4 < m:
                    # few rows, many candidate thresholds: sort the node's codes
                    for i in range(cnt):
                        buf_codes[i] = codes[f, rows[start + i]]
                    order = np.argsort(buf_codes[:cnt], kind="mergesort")
                    l0 = 0.0
                    l1 = 0.0
                    for i in range(cnt - 1):
                        r = rows[start + order[i]]
                        l0 += stats[r, 0]
                        l1 += stats[r, 1]
                        c = buf_codes[order[i]]
                        if c != buf_codes[order[i + 1]]:
                            g = _gain(mode, l0, l1, p0 - l0, p1 - l1, p0, p1, lam, gamma)
                            if g > best_gain:
                                best_gain = g
                                best_f = f
                                best_k = c
                else:
                    for k in range(m + 1):
                        hist0[k] = 0.0
                        hist1[k] = 0.0
                        hcnt[k] = 0
                    fc = codes[f]
                    for i in range(start, end):
                        c = fc[rows[i]]
                        hist0[c] += s0[i]
                        hist1[c] += s1[i]
                        hcnt[c] += 1
                    l0 = 0.0
                    l1 = 0.0
                    nl = 0
                    for k in range(m):
                        if hcnt[k] == 0:
                            continue
                        l0 += hist0[k]
                        l1 += hist1[k]
                        nl += hcnt[k]
                        if nl == cnt:
                            break
                        g = _gain(mode, l0, l1, p0 - l0, p1 - l1, p0, p1, lam, gamma)
                        if g > best_gain:
                            best_gain = g
                            best_f = f
                            best_k = k
        if best_f < 0:
            for i in range(start, end):
                row_leaf[rows[i]] = node
            continue

        if not extra:
            best_thr = T[best_f, best_k]
        # stable partition: left rows first, original order kept on each side
        nl = 0
        for i in range(start, end):
            r = rows[i]
            if extra:
                go_left = X[r, best_f] < best_thr
            else:
                go_left = codes[best_f, r] <= best_k
            if go_left:
                tmp[nl] = r
                nl += 1
        pos = nl
        for i in range(start, end):
            r = rows[i]
            if extra:
                go_left = X[r, best_f] < best_thr
            else:
                go_left = codes[best_f, r] <= best_k
            if not go_left:
                tmp[pos] = r
                pos += 1
        for i in range(cnt):
            rows[start + i] = tmp[i]

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lc
        right[node] = rc
        depth_of[lc] = depth + 1
        depth_of[rc] = depth + 1
        st_node[sp] = rc
        st_start[sp] = start + nl
        st_end[sp] = end
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = start + nl
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _fill_hist(codes, nthr, stats, rows, start, end, g, h, hg, hh, hc):
    for i in range(start, end):
        r = rows[i]
        g[i] = stats[r, 0]
        h[i] = stats[r, 1]
    for f in range(codes.shape[0]):
        for k in range(nthr[f] + 1):
            hg[f, k] = 0.0
            hh[f, k] = 0.0
            hc[f, k] = 0
        fc = codes[f]
        for i in range(start, end):
            c = fc[rows[i]]
            hg[f, c] += g[i]
            hh[f, c] += h[i]
            hc[f, c] += 1


@numba.njit(cache=True, nogil=True)
def grow_boost_tree(codes, T, nthr, stats, rows, row_leaf, max_depth, lam, gamma):
    """Depth-limited Newton tree using histogram subtraction.

    Same splits as ``grow_tree`` in NEWTON mode with every feature as a
    candidate, but only the smaller child's histogram is built from rows;
    the larger one is the parent's minus the smaller.
    """
    d = codes.shape[0]
    n_rows = rows.shape[0]
    max_nodes = min(2 * n_rows + 1, (1 << (max_depth + 1)) - 1)
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros((max_nodes, 2))
    depth_of = np.zeros(max_nodes, dtype=np.int32)
    max_m = 0
    for f in range(d):
        if nthr[f] > max_m:
            max_m = nthr[f]
    n_slots = max_depth + 3
    HG = np.zeros((n_slots, d, max_m + 1))
    HH = np.zeros((n_slots, d, max_m + 1))
    HC = np.zeros((n_slots, d, max_m + 1), dtype=np.int64)
    free = np.arange(n_slots)
    n_free = n_slots
    g = np.empty(n_rows)
    h = np.empty(n_rows)
    tmp = np.empty(n_rows, dtype=np.int64)

    st_node = np.empty(max_nodes, dtype=np.int64)
    st_start = np.empty(max_nodes, dtype=np.int64)
    st_end = np.empty(max_nodes, dtype=np.int64)
    st_slot = np.empty(max_nodes, dtype=np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_rows
    st_slot[0] = -1
    sp = 1
    n_nodes = 1
    out = np.empty(2)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        slot = st_slot[sp]
        depth = depth_of[node]
        cnt = end - start
        p0 = 0.0
        p1 = 0.0
        for i in range(start, end):
            r = rows[i]
            p0 += stats[r, 0]
            p1 += stats[r, 1]
        _leaf_value(NEWTON, p0, p1, lam, out)
        value[node, 0] = out[0]

        best_gain = 0.0
        best_f = -1
        best_k = -1
        if depth < max_depth and cnt >= 2:
            if slot < 0:
                n_free -= 1
                slot = free[n_free]
                _fill_hist(codes, nthr, stats, rows, start, end, g, h,
                           HG[slot], HH[slot], HC[slot])
            for f in range(d):
                m = nthr[f]
                l0 = 0.0
                l1 = 0.0
                nl = 0
                for k in range(m):
                    if HC[slot, f, k] == 0:
                        continue
                    l0 += HG[slot, f, k]
                    l1 += HH[slot, f, k]
                    nl += HC[slot, f, k]
                    if nl == cnt:
                        break
                    gn = _gain(NEWTON, l0, l1, p0 - l0, p1 - l1, p0, p1, lam, gamma)
                    if gn > best_gain:
                        best_gain = gn
                        best_f = f
                        best_k = k
        if best_f < 0:
            if slot >= 0:
                free[n_free] = slot
                n_free += 1
            for i in range(start, end):
                row_leaf[rows[i]] = node
            continue

        nl = 0
        for i in range(start, end):
            r = rows[i]
            if codes[best_f, r] <= best_k:
                tmp[nl] = r
                nl += 1
        pos = nl
        for i in range(start, end):
            r = rows[i]
            if codes[best_f, r] > best_k:
                tmp[pos] = r
                pos += 1
        for i in range(cnt):
            rows[start + i] = tmp[i]

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = T[best_f, best_k]
        left[node] = lc
        right[node] = rc
        depth_of[lc] = depth + 1
        depth_of[rc] = depth + 1
        l_slot = -1
        r_slot = -1
        if depth + 1 < max_depth:
            n_free -= 1
            s2 = free[n_free]
            if nl <= cnt - nl:
                _fill_hist(codes, nthr, stats, rows, start, start + nl, g, h,
                           HG[s2], HH[s2], HC[s2])
                l_slot = s2
                r_slot = slot
            else:
                _fill_hist(codes, nthr, stats, rows, start + nl, end, g, h,
                           HG[s2], HH[s2], HC[s2])
                l_slot = slot
                r_slot = s2
            for f in range(d):
                for k in range(nthr[f] + 1):
                    HG[slot, f, k] -= HG[s2, f, k]
                    HH[slot, f, k] -= HH[s2, f, k]
                    HC[slot, f, k] -= HC[s2, f, k]
        else:
            free[n_free] = slot
            n_free += 1
        st_node[sp] = rc
        st_start[sp] = start + nl
        st_end[sp] = end
        st_slot[sp] = r_slot
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = start + nl
        st_slot[sp] = l_slot
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def grow_oblivious(codes, T, nthr, order, grad, hess, row_leaf, max_depth, lam, gamma):
    """Symmetric tree: one (feature, threshold) pair per level.

    The pair maximises the gain summed over every node of the level. Growth
    stops early when no pair has positive summed gain; all leaves then sit
    at the same (smaller) depth. ``order[f]`` lists rows sorted by code and
    is only used for features with many thresholds.
    """
    d = codes.shape[0]
    n = codes.shape[1]
    pos = np.zeros(n, dtype=np.int64)
    lv_feat = np.empty(max_depth, dtype=np.int64)
    lv_k = np.empty(max_depth, dtype=np.int64)
    n_levels = 0
    max_m = 0
    for f in range(d):
        if nthr[f] > max_m:
            max_m = nthr[f]

    for level in range(max_depth):
        n_nodes = 1 << level
        G = np.zeros(n_nodes)
        H = np.zeros(n_nodes)
        C = np.zeros(n_nodes, dtype=np.int64)
        for r in range(n):
            q = pos[r]
            G[q] += grad[r]
            H[q] += hess[r]
            C[q] += 1
        base = 0.0
        n_live = 0
        for q in range(n_nodes):
            base += _score(NEWTON, G[q], H[q], lam)
            if C[q] > 0:
                n_live += 1
        best = 0.0
        best_f = -1
        best_k = -1
        use_hist_any = False
        for f in range(d):
            if n_nodes * (nthr[f] + 1) <= n:
                use_hist_any = True
        if use_hist_any:
            hg = np.zeros((n_nodes, max_m + 1))
            hh = np.zeros((n_nodes, max_m + 1))
            hc = np.zeros(max_m + 1, dtype=np.int64)
        else:
            hg = np.zeros((1, 1))
            hh = np.zeros((1, 1))
            hc = np.zeros(1, dtype=np.int64)
        GL = np.zeros(n_nodes)
        HL = np.zeros(n_nodes)
        for f in range(d):
            m = nthr[f]
            if m == 0:
                continue
            if n_nodes * (m + 1) <= n:
                for q in range(n_nodes):
                    for k in range(m + 1):
                        hg[q, k] = 0.0
                        hh[q, k] = 0.0
                for k in range(m + 1):
                    hc[k] = 0
                for r in range(n):
                    c = codes[f, r]
                    q = pos[r]
                    hg[q, c] += grad[r]
                    hh[q, c] += hess[r]
                    hc[c] += 1
                for q in range(n_nodes):
                    GL[q] = 0.0
                    HL[q] = 0.0
                nl = 0
                for k in range(m):
                    if hc[k] == 0:
                        continue
                    nl += hc[k]
                    if nl == n:
                        break
                    tot = 0.0
                    for q in range(n_nodes):
                        GL[q] += hg[q, k]
                        HL[q] += hh[q, k]
                        tot += _score(NEWTON, GL[q], HL[q], lam)
                        tot += _score(NEWTON, G[q] - GL[q], H[q] - HL[q], lam)
                    g = 0.5 * (tot - base) - gamma * n_live
                    if g > best:
                        best = g
                        best_f = f
                        best_k = k
            else:
                # sweep rows in code order, updating one node's term per row
                for q in range(n_nodes):
                    GL[q] = 0.0
                    HL[q] = 0.0
                tot = base
                for i in range(n - 1):
                    r = order[f, i]
                    q = pos[r]
                    old = _score(NEWTON, GL[q], HL[q], lam) + _score(
                        NEWTON, G[q] - GL[q], H[q] - HL[q], lam)
                    GL[q] += grad[r]
                    HL[q] += hess[r]
                    new = _score(NEWTON, GL[q], HL[q], lam) + _score(
                        NEWTON, G[q] - GL[q], H[q] - HL[q], lam)
                    tot += new - old
                    c = codes[f, r]
                    if c != codes[f, order[f, i + 1]]:
                        g = 0.5 * (tot - base) - gamma * n_live
                        if g > best:
                            best = g
                            best_f = f
                            best_k = c
        if best_f < 0:
            break
        lv_feat[n_levels] = best_f
        lv_k[n_levels] = best_k
        n_levels += 1
        for r in range(n):
            pos[r] = 2 * pos[r] + (1 if codes[best_f, r] > best_k else 0)

    # complete binary tree in breadth-first layout
    n_leaves = 1 << n_levels
    total = 2 * n_leaves - 1
    feature = np.full(total, -1, dtype=np.int32)
    threshold = np.zeros(total)
    left = np.full(total, -1, dtype=np.int32)
    right = np.full(total, -1, dtype=np.int32)
    value = np.zeros((total, 2))
    for level in range(n_levels):
        first = (1 << level) - 1
        for q in range(1 << level):
            node = first + q
            feature[node] = lv_feat[level]
            threshold[node] = T[lv_feat[level], lv_k[level]]
            left[node] = 2 * node + 1
            right[node] = 2 * node + 2
    LG = np.zeros(n_leaves)
    LH = np.zeros(n_leaves)
    for r in range(n):
        LG[pos[r]] += grad[r]
        LH[pos[r]] += hess[r]
    first = n_leaves - 1
    for q in range(n_leaves):
        den = LH[q] + lam
        value[first + q, 0] = -LG[q] / den if den > 0.0 else 0.0
    for r in range(n):
        row_leaf[r] = first + pos[r]
    return feature, threshold, left, right, value


@numba.njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@numba.njit(cache=True, nogil=True)
def predict_forest(X, feature, threshold, left, right, value, offsets):
    """Sum of ``value`` rows reached in every packed tree."""
    n = X.shape[0]
    out = np.zeros((n, 2))
    for t in range(offsets.shape[0] - 1):
        base = offsets[t]
        for i in range(n):
            node = 0
            while feature[base + node] >= 0:
                j = base + node
                if X[i, feature[j]] < threshold[j]:
                    node = left[j]
                else:
                    node = right[j]
            out[i, 0] += value[base + node, 0]
            out[i, 1] += value[base + node, 1]
    return out

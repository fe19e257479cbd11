"""Event-driven replay engine (numba).

Several processes are advanced in lockstep over one realization of the
graphical representation. A site is kept in the event heap only while it is
infected in at least one process; otherwise its streams are dormant and their
pending events are skipped on reactivation. Events of a dormant
stream cannot change any process, so the replay is exact.

Stream codes: 0 common-left, 1 common-right, 2 residual-left,
3 residual-right, 4 recovery. The heap orders events by
``(time, site, code)``; this is the deterministic tie-break.

The engine works on a fixed site window ``[cap_lo, cap_hi]``. When the
infection reaches its edge the run returns ``OVERFLOW`` and the caller
restarts with a wider window; results do not depend on the window because
streams are keyed by site, not by array index.

Helpers take plain arrays rather than tuples of arrays: tuple unpacking in
the hot path costs reference-count traffic that numba does not prune.
"""

import numpy as np
from numba import njit

from .rng import stream_key, uniform_open

RANDOM = 0
SYNTHETIC = 1

THREE = 0
CONTACT_ALL = 1
CONTACT_COMMON = 2

REL_LEQ = 0
REL_SUBSET = 1
REL_EQUAL = 2

OK = 0
OVERFLOW = 1

NEG = -(1 << 62)
POS = 1 << 62

N_CODES = 5
RECOVERY_CODE = 4

# rows of the per-process integer table
NINF = 0
RMAX = 1
LMIN = 2
XMAX = 3
XMIN = 4
TLO = 5
THI = 6


# ---------------------------------------------------------------- streams

@njit(cache=True, inline='always')
def _target(site, code):
    if code % 2 == 0:
        return site - 1
    return site + 1


@njit(cache=True, inline='always')
def _layer_step(mode, keep, horizon, syn_t, keys, lt, lq, send, i, code, j):
    if mode == SYNTHETIC:
        idx = lq[i, code, 0]
        if idx < send[i, code]:
            lt[i, code, 0] = syn_t[idx]
            lq[i, code, 0] = idx + 1
        else:
            lt[i, code, 0] = np.inf
        return
    kp = keep[code, j]
    key = keys[i, code, j]
    q = lq[i, code, j] + 1
    t = lt[i, code, j] - np.log(uniform_open(key, q, 0))
    if kp < 1.0:
        while t <= horizon and uniform_open(key, q, 1) >= kp:
            q += 1
            t -= np.log(uniform_open(key, q, 0))
    if t > horizon:
        t = np.inf
    lq[i, code, j] = q
    lt[i, code, j] = t


@njit(cache=True, inline='always')
def _next_time(nl, lt, i, code):
    best = np.inf
    arg = -1
    for j in range(nl[code]):
        if lt[i, code, j] < best:
            best = lt[i, code, j]
            arg = j
    return best, arg


@njit(cache=True)
def _init_site(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
               inited, keys, lt, lq, send, i, site):
    inited[i] = 1
    for code in range(N_CODES):
        if mode == SYNTHETIC:
            c = site * N_CODES + code
            pos = np.searchsorted(syn_code, c)
            if pos < syn_code.shape[0] and syn_code[pos] == c:
                lq[i, code, 0] = syn_off[pos]
                send[i, code] = syn_off[pos + 1]
            else:
                lq[i, code, 0] = 0
                send[i, code] = 0
            lt[i, code, 0] = 0.0
            _layer_step(mode, keep, horizon, syn_t, keys, lt, lq, send, i, code, 0)
        else:
            for j in range(nl[code]):
                keys[i, code, j] = stream_key(seed, site, code, j)
                lt[i, code, j] = 0.0
                lq[i, code, j] = 0
                _layer_step(mode, keep, horizon, syn_t, keys, lt, lq, send, i, code, j)


def _unpack(ens):
    mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t = ens
    if mode == SYNTHETIC:
        nl = np.ones(N_CODES, dtype=np.int64)
    return mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t


@njit(cache=True)
def _stream_times(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t, site, code, t1):
    m = max(1, nl.max())
    inited = np.zeros(1, dtype=np.uint8)
    keys = np.zeros((1, N_CODES, m), dtype=np.uint64)
    lt = np.zeros((1, N_CODES, m), dtype=np.float64)
    lq = np.zeros((1, N_CODES, m), dtype=np.int64)
    send = np.zeros((1, N_CODES), dtype=np.int64)
    _init_site(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
               inited, keys, lt, lq, send, 0, site)
    out = np.empty(16, dtype=np.float64)
    n = 0
    while True:
        t, j = _next_time(nl, lt, 0, code)
        if j < 0 or t > t1:
            break
        if n == out.shape[0]:
            grown = np.empty(2 * n, dtype=np.float64)
            grown[:n] = out
            out = grown
        out[n] = t
        n += 1
        _layer_step(mode, keep, horizon, syn_t, keys, lt, lq, send, 0, code, j)
    return out[:n]


def stream_times(ens, site, code, t1):
    """All event times of one stream in (0, t1], merged over layers."""
    return _stream_times(*_unpack(ens), site, code, t1)


# ------------------------------------------------------------------ queue
# Tournament tree over the array indices of the site window. Leaf ``i`` holds
# the earliest scheduled event time of site ``i`` (inf while dormant); each
# inner node holds the earlier of its two children, the left one on ties, so
# the root is the next event in ``(time, site)`` order. The code of the
# pending event of site ``i`` is ``kc[i]``; per-stream next times live in
# ``nt`` (inf when unscheduled).

@njit(cache=True)
def _tree_size(n):
    size = 1
    while size < n:
        size *= 2
    return size


@njit(cache=True, inline='always')
def _tree_set(tt, ti, size, i, t):
    k = size + i
    tt[k] = t
    k >>= 1
    while k >= 1:
        left = 2 * k
        w = left + 1 if tt[left + 1] < tt[left] else left
        tt[k] = tt[w]
        ti[k] = ti[w]
        k >>= 1


@njit(cache=True, inline='always')
def _rekey(nt, kc, tt, ti, size, i):
    """Recompute the earliest pending event of site ``i``."""
    best = np.inf
    arg = 0
    for code in range(N_CODES):
        if nt[i, code] < best:
            best = nt[i, code]
            arg = code
    kc[i] = arg
    _tree_set(tt, ti, size, i, best)


@njit(cache=True)
def _new_tree(size):
    tt = np.full(2 * size, np.inf)
    ti = np.zeros(2 * size, dtype=np.int64)
    for i in range(size):
        ti[size + i] = i
    for k in range(size - 1, 0, -1):
        ti[k] = ti[2 * k]
    return tt, ti


@njit(cache=True)
def _activate(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
              inited, keys, lt, lq, send, nt, nj, kc, tt, ti, size,
              i, site, t, after, t_end, lat_lo, lat_hi):
    """Schedule the streams of a newly active site.

    Events strictly before ``(t, after)`` in heap order are dormant and
    skipped; ``after`` is the slot of the event that activated the site.
    """
    if inited[i] == 0:
        _init_site(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
                   inited, keys, lt, lq, send, i, site)
    for code in range(N_CODES):
        nt[i, code] = np.inf
        if code < RECOVERY_CODE:
            y = _target(site, code)
            if y < lat_lo or y > lat_hi:
                continue
        passed = i * N_CODES + code <= after
        tn, j = _next_time(nl, lt, i, code)
        while tn < t or (tn == t and passed):
            _layer_step(mode, keep, horizon, syn_t, keys, lt, lq, send, i, code, j)
            tn, j = _next_time(nl, lt, i, code)
        if tn <= t_end:
            nt[i, code] = tn
            nj[i, code] = j
    _rekey(nt, kc, tt, ti, size, i)


@njit(cache=True, inline='always')
def _advance(mode, keep, horizon, syn_t, keys, lt, lq, send, nl, nt, nj, i, code, t_end):
    """Consume the pending event of one stream and cache its next time."""
    _layer_step(mode, keep, horizon, syn_t, keys, lt, lq, send, i, code, nj[i, code])
    tn, j = _next_time(nl, lt, i, code)
    if tn <= t_end:
        nt[i, code] = tn
        nj[i, code] = j
    else:
        nt[i, code] = np.inf


# -------------------------------------------------------------- processes

@njit(cache=True)
def _load(st, cnt, pi, ext, kinds, init_states, init_base, cap_lo):
    for p in range(st.shape[0]):
        for k in range(init_states.shape[1]):
            v = init_states[p, k]
            if v == -1:
                continue
            site = init_base + k
            if kinds[p] != THREE and v != 1:
                continue
            st[p, site - cap_lo] = v
            pi[TLO, p] = min(pi[TLO, p], site)
            pi[THI, p] = max(pi[THI, p], site)
            if v == 1:
                cnt[site - cap_lo] += 1
                pi[NINF, p] += 1
                pi[RMAX, p] = max(pi[RMAX, p], site)
                pi[LMIN, p] = min(pi[LMIN, p], site)
        pi[XMAX, p] = pi[RMAX, p]
        pi[XMIN, p] = pi[LMIN, p]
        if pi[NINF, p] == 0:
            ext[p] = -np.inf


@njit(cache=True)
def _new_pi(k):
    pi = np.zeros((7, k), dtype=np.int64)
    pi[RMAX, :] = NEG
    pi[XMAX, :] = NEG
    pi[THI, :] = NEG
    pi[LMIN, :] = POS
    pi[XMIN, :] = POS
    pi[TLO, :] = POS
    return pi


@njit(cache=True, inline='always')
def _mark_infected(st, cnt, pi, p, y, cap_lo):
    """Set ``y`` infected in process ``p``; True if the site just became active."""
    iy = y - cap_lo
    st[p, iy] = 1
    cnt[iy] += 1
    pi[NINF, p] += 1
    if y > pi[RMAX, p]:
        pi[RMAX, p] = y
    if y < pi[LMIN, p]:
        pi[LMIN, p] = y
    if y > pi[XMAX, p]:
        pi[XMAX, p] = y
    if y < pi[XMIN, p]:
        pi[XMIN, p] = y
    if y > pi[THI, p]:
        pi[THI, p] = y
    if y < pi[TLO, p]:
        pi[TLO, p] = y
    return cnt[iy] == 1


@njit(cache=True, inline='always')
def _recover(st, cnt, pi, ext, kinds, p, x, t, cap_lo):
    ix = x - cap_lo
    if kinds[p] == THREE:
        st[p, ix] = 0
    else:
        st[p, ix] = -1
    cnt[ix] -= 1
    pi[NINF, p] -= 1
    if pi[NINF, p] == 0:
        pi[RMAX, p] = NEG
        pi[LMIN, p] = POS
        if ext[p] == np.inf:
            ext[p] = t
        return
    if x == pi[RMAX, p]:
        j = ix - 1
        while st[p, j] != 1:
            j -= 1
        pi[RMAX, p] = j + cap_lo
    if x == pi[LMIN, p]:
        j = ix + 1
        while st[p, j] != 1:
            j += 1
        pi[LMIN, p] = j + cap_lo


@njit(cache=True, inline='always')
def _apply_arrow(st, cnt, pi, kinds, res_target, plat_lo, i, code, y, cap_lo):
    """Apply an arrow from array index ``i`` to site ``y`` in every process.

    ``plat_lo[p]`` is the left end of the lattice of process ``p``. Returns
    True if ``y`` went from no infected process to at least one.
    """
    iy = y - cap_lo
    common = code < 2
    newly = False
    for p in range(st.shape[0]):
        if st[p, i] != 1 or y < plat_lo[p]:
            continue
        s = st[p, iy]
        if s == 1:
            continue
        k = kinds[p]
        if k == THREE:
            hit = common or s == res_target
        elif k == CONTACT_ALL:
            hit = True
        else:
            hit = common
        if hit:
            if _mark_infected(st, cnt, pi, p, y, cap_lo):
                newly = True
    return newly


@njit(cache=True, inline='always')
def _apply_recovery(st, cnt, pi, ext, kinds, i, site, t, cap_lo):
    for p in range(st.shape[0]):
        if st[p, i] == 1:
            _recover(st, cnt, pi, ext, kinds, p, site, t, cap_lo)


@njit(cache=True)
def _check_site(st, chk_p, chk_q, chk_rel, viol, viol_t, i, t):
    for c in range(chk_p.shape[0]):
        a = st[chk_p[c], i]
        b = st[chk_q[c], i]
        rel = chk_rel[c]
        if rel == REL_LEQ:
            bad = a > b
        elif rel == REL_SUBSET:
            bad = a == 1 and b != 1
        else:
            bad = (a == 1) != (b == 1)
        if bad:
            if viol[c] == 0:
                viol_t[c] = t
            viol[c] += 1


@njit(cache=True)
def _snap(st, pi, cap_lo, p, snap_site, snap_state, nsnap):
    for site in range(pi[TLO, p], pi[THI, p] + 1):
        v = st[p, site - cap_lo]
        if v == -1:
            continue
        if nsnap == snap_site.shape[0]:
            m = 2 * nsnap + 64
            s2 = np.empty(m, dtype=np.int64)
            v2 = np.empty(m, dtype=np.int8)
            s2[:nsnap] = snap_site[:nsnap]
            v2[:nsnap] = snap_state[:nsnap]
            snap_site, snap_state = s2, v2
        snap_site[nsnap] = site
        snap_state[nsnap] = v
        nsnap += 1
    return snap_site, snap_state, nsnap


# ----------------------------------------------------------------- drivers

def run_lockstep(ens, kinds, res_target, init_states, init_base, start_time, t_end,
                 plat_lo, lat_hi, cap_lo, cap_hi, grid, want_snap, chk_p, chk_q, chk_rel):
    """Replay ``len(kinds)`` processes on one realization.

    Process ``p`` lives on the lattice ``[plat_lo[p], lat_hi]``. Returns ``(status, rec, ext, n_events, viol, viol_t, snap_off, snap_site,
    snap_state)``. ``rec[k, p, g]`` holds, for k = 0..4: rightmost infected,
    running max, leftmost infected, running min, infected count.
    """
    return _run_lockstep(*_unpack(ens), kinds, res_target, init_states, init_base,
                         start_time, t_end, plat_lo, lat_hi, cap_lo, cap_hi, grid,
                         want_snap, chk_p, chk_q, chk_rel)


@njit(cache=True)
def _run_lockstep(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
                  kinds, res_target, init_states, init_base, start_time, t_end,
                  plat_lo, lat_hi, cap_lo, cap_hi, grid, want_snap, chk_p, chk_q, chk_rel):
    n = cap_hi - cap_lo + 1
    lat_lo = plat_lo.min()
    m = max(1, nl.max())
    inited = np.zeros(n, dtype=np.uint8)
    keys = np.zeros((n, N_CODES, m), dtype=np.uint64)
    lt = np.zeros((n, N_CODES, m), dtype=np.float64)
    lq = np.zeros((n, N_CODES, m), dtype=np.int64)
    send = np.zeros((n, N_CODES), dtype=np.int64)
    nt = np.full((n, N_CODES), np.inf)
    nj = np.zeros((n, N_CODES), dtype=np.int64)
    kc = np.zeros(n, dtype=np.int64)
    size = _tree_size(n)
    tt, ti = _new_tree(size)
    K = kinds.shape[0]
    st = np.full((K, n), -1, dtype=np.int8)
    cnt = np.zeros(n, dtype=np.int32)
    pi = _new_pi(K)
    ext = np.full(K, np.inf)
    _load(st, cnt, pi, ext, kinds, init_states, init_base, cap_lo)

    nchk = chk_p.shape[0]
    viol = np.zeros(nchk, dtype=np.int64)
    viol_t = np.full(nchk, np.inf)
    if nchk > 0:
        for i in range(n):
            _check_site(st, chk_p, chk_q, chk_rel, viol, viol_t, i, start_time)

    G = grid.shape[0]
    rec = np.zeros((5, K, G), dtype=np.int64)
    snap_off = np.zeros(K * G + 1, dtype=np.int64)
    snap_site = np.empty(0, dtype=np.int64)
    snap_state = np.empty(0, dtype=np.int8)
    nsnap = 0
    status = OK

    for i in range(n):
        if cnt[i] > 0:
            site = i + cap_lo
            if site <= cap_lo or site >= cap_hi:
                status = OVERFLOW
                break
            _activate(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
                      inited, keys, lt, lq, send, nt, nj, kc, tt, ti, size,
                      i, site, start_time, POS, t_end, lat_lo, lat_hi)

    n_events = 0
    g = 0
    while status == OK:
        t_next = tt[1]
        while g < G and grid[g] < t_next:
            for p in range(K):
                rec[0, p, g] = pi[RMAX, p]
                rec[1, p, g] = pi[XMAX, p]
                rec[2, p, g] = pi[LMIN, p]
                rec[3, p, g] = pi[XMIN, p]
                rec[4, p, g] = pi[NINF, p]
                if want_snap:
                    snap_site, snap_state, nsnap = _snap(st, pi, cap_lo, p,
                                                         snap_site, snap_state, nsnap)
                snap_off[g * K + p + 1] = nsnap
            g += 1
        if t_next == np.inf:
            break
        i = ti[1]
        t = t_next
        code = kc[i]
        slot = i * N_CODES + code
        site = i + cap_lo
        _advance(mode, keep, horizon, syn_t, keys, lt, lq, send, nl, nt, nj, i, code, t_end)
        n_events += 1
        if code == RECOVERY_CODE:
            _apply_recovery(st, cnt, pi, ext, kinds, i, site, t, cap_lo)
        else:
            y = _target(site, code)
            if lat_lo <= y <= lat_hi:
                if _apply_arrow(st, cnt, pi, kinds, res_target, plat_lo, i, code, y, cap_lo):
                    if y <= cap_lo or y >= cap_hi:
                        status = OVERFLOW
                        break
                    _activate(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
                              inited, keys, lt, lq, send, nt, nj, kc, tt, ti, size,
                              y - cap_lo, y, t, slot, t_end, lat_lo, lat_hi)
        if nchk > 0:
            _check_site(st, chk_p, chk_q, chk_rel, viol, viol_t, i, t)
            if code != RECOVERY_CODE:
                y = _target(site, code)
                if lat_lo <= y <= lat_hi:
                    _check_site(st, chk_p, chk_q, chk_rel, viol, viol_t, y - cap_lo, t)
        if cnt[i] > 0:
            _rekey(nt, kc, tt, ti, size, i)
        else:
            _tree_set(tt, ti, size, i, np.inf)
    return (status, rec, ext, n_events, viol, viol_t,
            snap_off, snap_site[:nsnap].copy(), snap_state[:nsnap].copy())


@njit(cache=True)
def _grow_f(a, n):
    if n < a.shape[0]:
        return a
    b = np.empty(2 * a.shape[0] + 16, dtype=a.dtype)
    b[:n] = a[:n]
    return b


@njit(cache=True)
def _grow_i(a, n):
    if n < a.shape[0]:
        return a
    b = np.empty(2 * a.shape[0] + 16, dtype=a.dtype)
    b[:n] = a[:n]
    return b


def run_competitions(ens, res_target, depth, t_end, cap_lo, cap_hi, grid, want_sets):
    """Half-line three-state run with the iterated contact processes.

    Process 0 is the three-state process from sites ``-depth..0`` on the
    lattice ``[-depth, inf)``; process 1 is the contact process from the same
    sites; process 2 is the contact process of the current stage, relaunched
    from the three-state infected set at every stopping time.

    Competition outcomes: 0 residual arrow first, 1 common arrow first,
    2 recovery first.
    """
    return _run_competitions(*_unpack(ens), res_target, depth, t_end, cap_lo, cap_hi,
                             grid, want_sets)


@njit(cache=True)
def _run_competitions(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
                      res_target, depth, t_end, cap_lo, cap_hi, grid, want_sets):
    n = cap_hi - cap_lo + 1
    lat_lo = -depth
    lat_hi = POS
    m = max(1, nl.max())
    inited = np.zeros(n, dtype=np.uint8)
    keys = np.zeros((n, N_CODES, m), dtype=np.uint64)
    lt = np.zeros((n, N_CODES, m), dtype=np.float64)
    lq = np.zeros((n, N_CODES, m), dtype=np.int64)
    send = np.zeros((n, N_CODES), dtype=np.int64)
    nt = np.full((n, N_CODES), np.inf)
    nj = np.zeros((n, N_CODES), dtype=np.int64)
    kc = np.zeros(n, dtype=np.int64)
    size = _tree_size(n)
    tt, ti = _new_tree(size)
    kinds = np.array([THREE, CONTACT_ALL, CONTACT_ALL], dtype=np.int64)
    plat_lo = np.full(3, lat_lo, dtype=np.int64)
    st = np.full((3, n), -1, dtype=np.int8)
    cnt = np.zeros(n, dtype=np.int32)
    pi = _new_pi(3)
    ext = np.full(3, np.inf)
    init = np.ones((3, depth + 1), dtype=np.int8)
    _load(st, cnt, pi, ext, kinds, init, -depth, cap_lo)

    G = grid.shape[0]
    # rbar, xbar, R0, R of the current stage, F, D, n_inf
    rec = np.zeros((7, G), dtype=np.int64)
    tau = np.zeros(16, dtype=np.float64)
    n_tau = 1
    res_t = np.zeros(16, dtype=np.float64)
    outcome = np.zeros(16, dtype=np.int64)
    n_res = 0
    ups = np.zeros(16, dtype=np.float64)
    n_ups = 1
    hit_edge = np.zeros(16, dtype=np.int64)
    hit_rbar = np.zeros(16, dtype=np.int64)
    set_off = np.zeros(16, dtype=np.int64)
    set_site = np.zeros(64, dtype=np.int64)
    n_set = 0
    eq3_bad = 0
    eq4_bad = 0
    dom_bad = 0
    d_count = 0
    in_comp = True
    status = OK

    for i in range(n):
        if cnt[i] > 0:
            site = i + cap_lo
            if site <= cap_lo or site >= cap_hi:
                status = OVERFLOW
                break
            _activate(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
                      inited, keys, lt, lq, send, nt, nj, kc, tt, ti, size,
                      i, site, 0.0, POS, t_end, lat_lo, lat_hi)

    n_events = 0
    g = 0
    while status == OK:
        t_next = tt[1]
        while g < G and grid[g] < t_next:
            rec[0, g] = pi[RMAX, 0]
            rec[1, g] = pi[XMAX, 0]
            rec[2, g] = pi[RMAX, 1]
            rec[3, g] = pi[RMAX, 2]
            rec[4, g] = n_ups - 1
            rec[5, g] = d_count
            rec[6, g] = pi[NINF, 0]
            g += 1
        if t_next == np.inf:
            break
        i = ti[1]
        t = t_next
        code = kc[i]
        slot = i * N_CODES + code
        site = i + cap_lo
        _advance(mode, keep, horizon, syn_t, keys, lt, lq, send, nl, nt, nj, i, code, t_end)
        n_events += 1

        resolved = -1
        if in_comp and site == pi[XMAX, 0]:
            if code == 1:
                resolved = 1
            elif code == 3:
                resolved = 0
            elif code == RECOVERY_CODE:
                resolved = 2
        if code == RECOVERY_CODE and site == pi[RMAX, 0] and st[0, i] == 1:
            d_count += 1

        y = site
        if code == RECOVERY_CODE:
            _apply_recovery(st, cnt, pi, ext, kinds, i, site, t, cap_lo)
        else:
            z = _target(site, code)
            if z >= lat_lo:
                y = z
                if _apply_arrow(st, cnt, pi, kinds, res_target, plat_lo, i, code, y, cap_lo):
                    if y >= cap_hi:
                        status = OVERFLOW
                        break
                    _activate(mode, seed, nl, keep, horizon, syn_code, syn_off, syn_t,
                              inited, keys, lt, lq, send, nt, nj, kc, tt, ti, size,
                              y - cap_lo, y, t, slot, t_end, lat_lo, lat_hi)

        if resolved >= 0:
            in_comp = False
            res_t = _grow_f(res_t, n_res)
            outcome = _grow_i(outcome, n_res)
            res_t[n_res] = t
            outcome[n_res] = resolved
            n_res += 1
        if not in_comp and pi[NINF, 0] > 0 and pi[RMAX, 0] == pi[XMAX, 0]:
            in_comp = True
            tau = _grow_f(tau, n_tau)
            tau[n_tau] = t
            n_tau += 1

        # three-state and stage processes are dominated by the full contact process
        for z in (site, y):
            iz = z - cap_lo
            if st[1, iz] != 1 and (st[0, iz] == 1 or st[2, iz] == 1):
                dom_bad += 1

        if pi[RMAX, 2] != pi[RMAX, 0]:
            if pi[NINF, 0] > 0 and pi[RMAX, 2] == pi[RMAX, 0] + 1:
                lo = min(pi[LMIN, 0], pi[LMIN, 2])
                hi = max(pi[RMAX, 0] + 1, pi[RMAX, 2])
                for z in range(lo, hi + 1):
                    iz = z - cap_lo
                    want = st[0, iz] == 1 or z == pi[RMAX, 0] + 1
                    if (st[2, iz] == 1) != want:
                        eq4_bad += 1
                ups = _grow_f(ups, n_ups)
                hit_edge = _grow_i(hit_edge, n_ups)
                hit_rbar = _grow_i(hit_rbar, n_ups)
                ups[n_ups] = t
                hit_edge[n_ups] = pi[RMAX, 2]
                hit_rbar[n_ups] = pi[RMAX, 0]
                n_ups += 1
                # relaunch the stage process from the three-state infected set
                lo = min(pi[TLO, 2], pi[TLO, 0])
                hi = max(pi[THI, 2], pi[THI, 0])
                for z in range(lo, hi + 1):
                    iz = z - cap_lo
                    now = st[0, iz] == 1
                    was = st[2, iz] == 1
                    if was and not now:
                        st[2, iz] = -1
                        cnt[iz] -= 1
                        if cnt[iz] == 0:
                            _tree_set(tt, ti, size, iz, np.inf)
                    elif now and not was:
                        st[2, iz] = 1
                        cnt[iz] += 1
                pi[NINF, 2] = pi[NINF, 0]
                pi[RMAX, 2] = pi[RMAX, 0]
                pi[LMIN, 2] = pi[LMIN, 0]
                pi[XMAX, 2] = pi[RMAX, 0]
                pi[XMIN, 2] = pi[LMIN, 0]
                pi[TLO, 2] = lo
                pi[THI, 2] = hi
                if want_sets:
                    set_off = _grow_i(set_off, n_ups)
                    for z in range(pi[LMIN, 0], pi[RMAX, 0] + 1):
                        if st[0, z - cap_lo] == 1:
                            set_site = _grow_i(set_site, n_set)
                            set_site[n_set] = z
                            n_set += 1
                    set_off[n_ups - 1] = n_set
            else:
                eq3_bad += 1

        if cnt[i] > 0:
            _rekey(nt, kc, tt, ti, size, i)
        else:
            _tree_set(tt, ti, size, i, np.inf)

    counts = np.array([n_events, eq3_bad, eq4_bad, dom_bad, d_count], dtype=np.int64)
    set_off[0] = 0
    return (status, rec, tau[:n_tau].copy(), res_t[:n_res].copy(),
            outcome[:n_res].copy(), ups[:n_ups].copy(), hit_edge[:n_ups].copy(),
            hit_rbar[:n_ups].copy(), set_off[:n_ups].copy(), set_site[:n_set].copy(),
            counts)

"""Independent reference solutions used as test oracles.

The exact shallow water Riemann solution (depth-function Newton iteration
plus rarefaction fans) is implemented here from scratch; the production
solver never calls it.
"""

import numpy as np


def _phi(h, hk, g):
    """Depth function: u-change across a wave connecting to state hk."""
    h = np.asarray(h, dtype=float)
    rare = 2.0 * (np.sqrt(g * h) - np.sqrt(g * hk))
    with np.errstate(divide="ignore", invalid="ignore"):
        shock = (h - hk) * np.sqrt(0.5 * g * (h + hk)
                                   / np.maximum(h * hk, 1e-300))
    return np.where(h <= hk, rare, shock)


def exact_middle_state(hl, ul, hr, ur, g=9.81, tol=1e-14, max_iter=200):
    """Middle depth/velocity of the exact wet-wet Riemann solution."""
    if hl <= 0 or hr <= 0:
        raise ValueError("use the dry-front solution for dry states")
    # two-rarefaction estimate as the starting guess
    hm = max(1e-12, (0.5 * (np.sqrt(g * hl) + np.sqrt(g * hr))
                     + 0.25 * (ul - ur)) ** 2 / g)
    for _ in range(max_iter):
        f = _phi(hm, hl, g) + _phi(hm, hr, g) + ur - ul
        dh = max(1e-8 * hm, 1e-12)
        dfdh = (_phi(hm + dh, hl, g) + _phi(hm + dh, hr, g)
                - _phi(hm - dh, hl, g) - _phi(hm - dh, hr, g)) / (2 * dh)
        step = f / dfdh
        hm_new = hm - step
        if hm_new <= 0:
            hm_new = 0.5 * hm
        if abs(hm_new - hm) < tol * max(hm, 1.0):
            hm = hm_new
            break
        hm = hm_new
    um = 0.5 * (ul + ur) + 0.5 * (_phi(hm, hr, g) - _phi(hm, hl, g))
    return hm, um


def exact_riemann_profile(hl, ul, hr, ur, xi, g=9.81):
    """Exact similarity solution h(x/t), u(x/t) of the Riemann problem.

    Handles wet-wet problems and a dry right (or left) state.
    """
    xi = np.asarray(xi, dtype=float)
    if hr <= 0.0 and hl <= 0.0:
        return np.zeros_like(xi), np.zeros_like(xi)
    if hr <= 0.0:
        return _dry_right(hl, ul, xi, g)
    if hl <= 0.0:
        h, u = _dry_right(hr, -ur, -xi[::-1], g)
        return h[::-1], -u[::-1]

    hm, um = exact_middle_state(hl, ul, hr, ur, g)
    cl = np.sqrt(g * hl)
    cm = np.sqrt(g * hm)
    cr = np.sqrt(g * hr)

    h = np.empty_like(xi)
    u = np.empty_like(xi)

    # left wave
    if hm <= hl:   # rarefaction
        head = ul - cl
        tail = um - cm
        left = xi <= head
        fan = (xi > head) & (xi < tail)
        h[left] = hl
        u[left] = ul
        cf = (ul + 2.0 * cl - xi[fan]) / 3.0
        h[fan] = cf ** 2 / g
        u[fan] = xi[fan] + cf
        mid_lo = xi >= tail
    else:          # shock
        s = ul - cm * np.sqrt(0.5 * (hm / hl) * (1.0 + hl / hm))
        left = xi <= s
        h[left] = hl
        u[left] = ul
        mid_lo = xi > s

    # right wave
    if hm <= hr:   # rarefaction
        tail = um + cm
        head = ur + cr
        right = xi >= head
        fan = (xi > tail) & (xi < head)
        h[right] = hr
        u[right] = ur
        cf = (xi[fan] - ur + 2.0 * cr) / 3.0
        h[fan] = cf ** 2 / g
        u[fan] = xi[fan] - cf
        mid_hi = xi <= tail
    else:          # shock
        s = ur + cm * np.sqrt(0.5 * (hm / hr) * (1.0 + hr / hm))
        right = xi >= s
        h[right] = hr
        u[right] = ur
        mid_hi = xi < s

    mid = mid_lo & mid_hi
    h[mid] = hm
    u[mid] = um
    return h, u


def _dry_right(hl, ul, xi, g):
    """Rarefaction into a dry bed on the right (Ritter solution)."""
    cl = np.sqrt(g * hl)
    head = ul - cl
    front = ul + 2.0 * cl
    h = np.empty_like(xi)
    u = np.empty_like(xi)
    left = xi <= head
    fan = (xi > head) & (xi < front)
    dry = xi >= front
    h[left] = hl
    u[left] = ul
    cf = (ul + 2.0 * cl - xi[fan]) / 3.0
    h[fan] = cf ** 2 / g
    u[fan] = xi[fan] + cf
    h[dry] = 0.0
    u[dry] = 0.0
    return h, u


def dry_front_speed(h_wet, u_wet, g=9.81):
    """Propagation speed of a wetting front into dry land."""
    return u_wet + 2.0 * np.sqrt(g * h_wet)

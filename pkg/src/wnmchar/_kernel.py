"""Compiled inner loops: device evaluation, MNA assembly, Newton, time stepping.

Node numbering: unknown nodes occupy ``0 .. nu-1`` of the full voltage vector,
source-driven nodes (including ground) follow. Only unknown rows/columns are
assembled into the Jacobian.
"""
import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_DT_UNDERFLOW = 1
STATUS_NO_CONVERGENCE = 2

MODE_DC = 0
MODE_BE = 1
MODE_TRAP = 2


@njit(cache=True)
def _softplus(x):
    if x > 35.0:
        return x
    if x < -35.0:
        return np.exp(x)
    return np.log1p(np.exp(x))


@njit(cache=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _nmos_core(vg, vd, vs, kf, vth, nsub, vt, lam, theta):
    a = 2.0 * nsub * vt
    spec = kf * a * a / (2.0 * nsub)
    xf = (vg - vs - vth) / a
    xr = (vg - vd - vth) / a
    lf = _softplus(xf)
    lr = _softplus(xr)
    fpf = 2.0 * lf * _sigmoid(xf) / a
    fpr = 2.0 * lr * _sigmoid(xr) / a
    b = lf * lf - lr * lr

    vds = vd - vs
    if vds > 0.0:
        sg = 1.0
    elif vds < 0.0:
        sg = -1.0
    else:
        sg = 0.0
    m = 1.0 + lam * abs(vds)

    low_is_source = vs <= vd
    vlow = vs if low_is_source else vd
    xu = (vg - vlow - vth) / a
    u = a * _softplus(xu)
    su = _sigmoid(xu)
    th = 1.0 / (1.0 + theta * u)
    dth = -theta * th * th

    i = spec * b * m * th
    gg = spec * ((fpf - fpr) * m * th + b * m * dth * su)
    gd = spec * (fpr * m * th + b * lam * sg * th)
    gs = spec * (-fpf * m * th - b * lam * sg * th)
    if low_is_source:
        gs -= spec * b * m * dth * su
    else:
        gd -= spec * b * m * dth * su
    return i, gg, gd, gs


@njit(cache=True)
def mos_eval(pol, vg, vd, vs, kf, vth, nsub, vt, lam, theta):
    """Drain current (into the drain terminal) and its partial derivatives.

    ``pol`` is +1 for N devices and -1 for P devices; ``vth`` is a magnitude.
    """
    if pol > 0:
        return _nmos_core(vg, vd, vs, kf, vth, nsub, vt, lam, theta)
    i, gg, gd, gs = _nmos_core(-vg, -vd, -vs, kf, vth, nsub, vt, lam, theta)
    return -i, gg, gd, gs


@njit(cache=True)
def pwl_eval(times, values, off, cnt, t):
    if cnt == 1 or t <= times[off]:
        return values[off]
    last = off + cnt - 1
    if t >= times[last]:
        return values[last]
    lo = off
    hi = last
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if times[mid] <= t:
            lo = mid
        else:
            hi = mid
    t0 = times[lo]
    t1 = times[hi]
    if t1 <= t0:
        return values[hi]
    return values[lo] + (values[hi] - values[lo]) * (t - t0) / (t1 - t0)


@njit(cache=True)
def fill_fixed(x, nu, src_t, src_v, src_off, src_cnt, t, scale):
    nfix = src_off.shape[0]
    for j in range(nfix):
        x[nu + j] = scale * pwl_eval(src_t, src_v, src_off[j], src_cnt[j], t)


@njit(cache=True)
def assemble(x, nu, mode, h, gmin,
             m_d, m_g, m_s, m_pol, m_kf, m_vth, m_n, m_lam, m_theta, vt,
             c_a, c_b, c_c, c_vprev, c_iprev,
             r_a, r_b, r_g,
             F, J, iscale):
    for i in range(nu):
        F[i] = gmin * x[i]
        iscale[i] = abs(gmin * x[i])
        for k in range(nu):
            J[i, k] = 0.0
        J[i, i] = gmin

    for k in range(m_d.shape[0]):
        d = m_d[k]
        g = m_g[k]
        s = m_s[k]
        i, gg, gd, gs = mos_eval(m_pol[k], x[g], x[d], x[s], m_kf[k], m_vth[k],
                                 m_n[k], vt, m_lam[k], m_theta[k])
        ai = abs(i)
        if d < nu:
            F[d] += i
            iscale[d] += ai
            if g < nu:
                J[d, g] += gg
            J[d, d] += gd
            if s < nu:
                J[d, s] += gs
        if s < nu:
            F[s] -= i
            iscale[s] += ai
            if g < nu:
                J[s, g] -= gg
            if d < nu:
                J[s, d] -= gd
            J[s, s] -= gs

    for k in range(r_a.shape[0]):
        a = r_a[k]
        b = r_b[k]
        g = r_g[k]
        i = g * (x[a] - x[b])
        if a < nu:
            F[a] += i
            iscale[a] += abs(i)
            J[a, a] += g
            if b < nu:
                J[a, b] -= g
        if b < nu:
            F[b] -= i
            iscale[b] += abs(i)
            J[b, b] += g
            if a < nu:
                J[b, a] -= g

    if mode != MODE_DC:
        for k in range(c_a.shape[0]):
            a = c_a[k]
            b = c_b[k]
            if mode == MODE_BE:
                geq = c_c[k] / h
                i = geq * (x[a] - x[b] - c_vprev[k])
            else:
                geq = 2.0 * c_c[k] / h
                i = geq * (x[a] - x[b] - c_vprev[k]) - c_iprev[k]
            if a < nu:
                F[a] += i
                iscale[a] += abs(i)
                J[a, a] += geq
                if b < nu:
                    J[a, b] -= geq
            if b < nu:
                F[b] -= i
                iscale[b] += abs(i)
                J[b, b] += geq
                if a < nu:
                    J[b, a] -= geq


@njit(cache=True)
def newton(x, nu, mode, h, gmin, i_abstol, v_reltol, v_abstol, max_step, max_iter,
           m_d, m_g, m_s, m_pol, m_kf, m_vth, m_n, m_lam, m_theta, vt,
           c_a, c_b, c_c, c_vprev, c_iprev, r_a, r_b, r_g,
           F, J, iscale):
    """Damped Newton on the unknown block of ``x`` (updated in place).

    Returns the number of linear solves, negated when not converged.
    """
    dx_ok = False
    solves = 0
    for it in range(max_iter):
        assemble(x, nu, mode, h, gmin, m_d, m_g, m_s, m_pol, m_kf, m_vth, m_n,
                 m_lam, m_theta, vt, c_a, c_b, c_c, c_vprev, c_iprev,
                 r_a, r_b, r_g, F, J, iscale)
        res_ok = True
        for i in range(nu):
            if abs(F[i]) > i_abstol + v_reltol * iscale[i]:
                res_ok = False
                break
        if res_ok and dx_ok:
            return solves
        if nu == 0:
            return solves
        dx = np.linalg.solve(J, -F)
        solves += 1
        dx_ok = True
        for i in range(nu):
            step = dx[i]
            if step > max_step:
                step = max_step
            elif step < -max_step:
                step = -max_step
            if not np.isfinite(step):
                return -solves
            x[i] += step
            if abs(step) > v_reltol * abs(x[i]) + v_abstol:
                dx_ok = False
    return -solves


@njit(cache=True)
def dc_solve(x, nu, gmin, i_abstol, v_reltol, v_abstol, max_step, max_iter,
             m_d, m_g, m_s, m_pol, m_kf, m_vth, m_n, m_lam, m_theta, vt,
             c_a, c_b, c_c, r_a, r_b, r_g):
    n = nu
    F = np.zeros(n)
    J = np.zeros((n, n))
    iscale = np.zeros(n)
    dummy = np.zeros(c_a.shape[0])
    return newton(x, nu, MODE_DC, 1.0, gmin, i_abstol, v_reltol, v_abstol,
                  max_step, max_iter, m_d, m_g, m_s, m_pol, m_kf, m_vth, m_n,
                  m_lam, m_theta, vt, c_a, c_b, c_c, dummy, dummy,
                  r_a, r_b, r_g, F, J, iscale)


@njit(cache=True)
def _next_breakpoint(bps, t, eps):
    for k in range(bps.shape[0]):
        if bps[k] > t + eps:
            return bps[k]
    return np.inf


@njit(cache=True)
def transient(x0, nu, t_start, t_stop, dt_max, dt_min, dt_first, bps,
              gmin, i_abstol, v_reltol, v_abstol, max_step, max_iter,
              lte_reltol, lte_abstol,
              src_t, src_v, src_off, src_cnt,
              m_d, m_g, m_s, m_pol, m_kf, m_vth, m_n, m_lam, m_theta, vt,
              c_a, c_b, c_c, r_a, r_b, r_g):
    nn = x0.shape[0]
    nc = c_a.shape[0]
    F = np.zeros(nu)
    J = np.zeros((nu, nu))
    iscale = np.zeros(nu)

    x = x0.copy()
    fill_fixed(x, nu, src_t, src_v, src_off, src_cnt, t_start, 1.0)
    c_vprev = np.empty(nc)
    c_iprev = np.zeros(nc)
    for k in range(nc):
        c_vprev[k] = x[c_a[k]] - x[c_b[k]]

    cap = 1024
    out_t = np.empty(cap)
    out_x = np.empty((cap, nn))
    out_t[0] = t_start
    out_x[0, :] = x
    n_out = 1

    # last accepted points since the most recent breakpoint, newest last
    hist_t = np.empty(3)
    hist_x = np.empty((3, nu))
    hist_t[2] = t_start
    hist_x[2, :] = x[:nu]
    n_hist = 1

    steps = 0
    iters = 0
    rejected = 0
    status = STATUS_OK

    eps = 1e-21
    t = t_start
    h = min(dt_first, dt_max)
    mode = MODE_BE
    xn = np.empty(nn)
    while t < t_stop - eps:
        bp = _next_breakpoint(bps, t, eps)
        tgt = min(bp, t_stop)
        hh = min(h, dt_max)
        hit = False
        if t + hh >= tgt - 1e-3 * hh:
            hh = tgt - t
            hit = True
        elif t + 1.5 * hh > tgt:
            hh = 0.5 * (tgt - t)

        # linear predictor as Newton starting point
        for i in range(nu):
            if n_hist >= 2:
                slope = (hist_x[2, i] - hist_x[1, i]) / (hist_t[2] - hist_t[1])
                xn[i] = x[i] + slope * hh
            else:
                xn[i] = x[i]
        fill_fixed(xn, nu, src_t, src_v, src_off, src_cnt, t + hh, 1.0)

        k = newton(xn, nu, mode, hh, gmin, i_abstol, v_reltol, v_abstol,
                   max_step, max_iter, m_d, m_g, m_s, m_pol, m_kf, m_vth, m_n,
                   m_lam, m_theta, vt, c_a, c_b, c_c, c_vprev, c_iprev,
                   r_a, r_b, r_g, F, J, iscale)
        if k < 0:
            iters -= k
            rejected += 1
            h = hh / 8.0
            if h < dt_min:
                status = STATUS_NO_CONVERGENCE
                break
            continue
        iters += k

        # local truncation error from divided differences over the history
        ratio = 0.0
        if n_hist >= 2:
            t3 = t + hh
            for i in range(nu):
                x3 = xn[i]
                x2 = hist_x[2, i]
                x1 = hist_x[1, i]
                t2 = hist_t[2]
                t1 = hist_t[1]
                d12 = (x2 - x1) / (t2 - t1)
                d23 = (x3 - x2) / (t3 - t2)
                dd2b = (d23 - d12) / (t3 - t1)
                if n_hist >= 3 and mode == MODE_TRAP:
                    x0_ = hist_x[0, i]
                    t0_ = hist_t[0]
                    d01 = (x1 - x0_) / (t1 - t0_)
                    dd2a = (d12 - d01) / (t2 - t0_)
                    dd3 = (dd2b - dd2a) / (t3 - t0_)
                    err = abs(0.5 * hh * hh * hh * dd3)
                else:
                    err = abs(hh * hh * dd2b)
                scale = max(abs(x3), abs(x2))
                tol = lte_reltol * scale + lte_abstol
                r = err / tol
                if r > ratio:
                    ratio = r
            if ratio > 1.0:
                rejected += 1
                fac = 0.9 * ratio ** (-1.0 / 3.0)
                if fac < 0.25:
                    fac = 0.25
                h = hh * fac
                if h < dt_min:
                    status = STATUS_DT_UNDERFLOW
                    break
                continue

        # accept
        for kk in range(nc):
            vab = xn[c_a[kk]] - xn[c_b[kk]]
            if mode == MODE_BE:
                inew = c_c[kk] / hh * (vab - c_vprev[kk])
            else:
                inew = 2.0 * c_c[kk] / hh * (vab - c_vprev[kk]) - c_iprev[kk]
            c_vprev[kk] = vab
            c_iprev[kk] = inew
        for i in range(nn):
            x[i] = xn[i]
        t = t + hh
        steps += 1

        if n_out == cap:
            cap *= 2
            nt = np.empty(cap)
            nx = np.empty((cap, nn))
            nt[:n_out] = out_t[:n_out]
            nx[:n_out, :] = out_x[:n_out, :]
            out_t = nt
            out_x = nx
        out_t[n_out] = t
        out_x[n_out, :] = x
        n_out += 1

        if hit and bp <= t_stop:
            hist_t[2] = t
            hist_x[2, :] = x[:nu]
            n_hist = 1
            mode = MODE_BE
            h = min(dt_first, dt_max)
            continue

        hist_t[0] = hist_t[1]
        hist_t[1] = hist_t[2]
        hist_t[2] = t
        hist_x[0, :] = hist_x[1, :]
        hist_x[1, :] = hist_x[2, :]
        hist_x[2, :] = x[:nu]
        if n_hist < 3:
            n_hist += 1
        mode = MODE_TRAP

        if n_hist >= 3 and ratio > 0.0:
            fac = 0.9 * ratio ** (-1.0 / 3.0)
            if fac > 2.0:
                fac = 2.0
            h = hh * fac
        else:
            h = hh * 2.0

    stats = np.array([steps, iters, rejected])
    return status, out_t[:n_out].copy(), out_x[:n_out, :].copy(), stats
